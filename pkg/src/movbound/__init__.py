"""Survival of Brownian motion below a one-sided moving boundary."""

__version__ = "0.1.0"
