# LETOR fixtures for the data IO and harness tests
