"""Arrival-time statistics for Bohmian and Bohm-like trajectories of a free Gaussian packet."""

__version__ = "0.1.0"
