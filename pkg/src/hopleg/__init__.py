"""Simulation and control of a two-joint cable-driven hopping leg on a vertical rail."""

__version__ = "0.1.0"
