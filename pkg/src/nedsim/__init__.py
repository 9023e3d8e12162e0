"""Simulation and impedance identification for a cable-driven leg perturbation rig."""

__version__ = "0.1.0"
