"""Observable registry and measured reference values."""
