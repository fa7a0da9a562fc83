# Test package for hazelab
