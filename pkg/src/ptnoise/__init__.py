"""Pseudo-spectral simulation of torus fluid SPDEs with pseudo-transport noise."""

__version__ = "0.1.0"
