"""Instance-level recognition benchmark tooling."""

__version__ = "0.1.0"
