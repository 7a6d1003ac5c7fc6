"""Point invariants and Lewy curves of second-order ODE systems."""

__version__ = "0.1.0"
