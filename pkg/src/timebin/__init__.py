"""Simulation of time-bin entangled photon pairs distributed over optical fiber."""

__version__ = "0.1.0"
