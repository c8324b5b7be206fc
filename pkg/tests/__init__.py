"""Unit test package for exactwkb."""
