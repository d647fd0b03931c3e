"""Spectral and propagator toolkit for adiabatic evolution of nonnormal
generators and quasi-static steady states of a driven open two-level system."""

__version__ = "0.1.0"
