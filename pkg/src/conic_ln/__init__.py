"""Singular Loewner-Nirenberg solutions on cones over spherical caps."""

__version__ = "0.1.0"
