"""LMI stability analysis and observer-based control design for discrete-time
systems with a nominal and a time-varying delay."""

__version__ = "0.1.0"
