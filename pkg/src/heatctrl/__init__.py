"""Risk-averse optimal control of the heat equation with lattice rules."""

__version__ = "0.1.0"
