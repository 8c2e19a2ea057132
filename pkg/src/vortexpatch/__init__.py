"""Steady vortex-patch maximizers of kinetic energy and their Euler evolution."""

__version__ = "0.1.0"
