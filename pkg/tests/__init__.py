# Test package for multi-agent hardware design schemas
