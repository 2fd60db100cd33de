"""Off-the-grid sparse measure recovery from random features."""

__version__ = "0.1.0"
