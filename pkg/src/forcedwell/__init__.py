"""Numerical laboratory for periodically forced double-well diffusions."""
__version__ = "0.1.0"
