"""Equilibrium-point estimation and correction for a wheeled inverted pendulum."""

__version__ = "0.1.0"
