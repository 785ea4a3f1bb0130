# Test package for rankforge
