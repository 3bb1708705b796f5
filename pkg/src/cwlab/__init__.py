"""Random walks in stationary random conductance environments on Z."""

__version__ = "0.1.0"
