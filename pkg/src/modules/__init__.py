# Make "modules" a regular package for reliable imports

