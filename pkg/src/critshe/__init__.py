"""critshe: numerical laboratory for the 2D stochastic heat equation at criticality."""

__version__ = "0.1.0"
