"""Guided-proposal simulation of multivariate diffusion bridges."""

__version__ = "0.3.0"
