"""Gyro-averaged charged-particle dynamics and convergence verification."""

__version__ = "0.1.0"
