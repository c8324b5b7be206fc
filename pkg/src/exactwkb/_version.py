"""Version information for exactwkb."""

__version__ = "0.1.0"
