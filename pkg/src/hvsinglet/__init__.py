"""Simulation lab for a measurement-dependent hidden-variable model of the spin singlet."""

__version__ = "0.1.0"
