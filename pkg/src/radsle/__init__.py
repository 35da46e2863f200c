"""Radial SLE simulation and numerical checks of its CFT predictions."""

__version__ = "0.1.0"
