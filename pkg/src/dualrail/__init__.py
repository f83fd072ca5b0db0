"""Simulation of autonomous entanglement distribution in dual-rail cascaded waveguide networks."""

__version__ = "0.1.0"
