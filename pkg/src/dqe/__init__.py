"""Dissipative quantum eigensolver: trajectories, exact analytics, circuits."""

__version__ = "0.1.0"
