"""Numerical laboratory for Schatten-class bounds on Fourier extension,
resolvent, propagator and scattering operators."""

__version__ = "0.1.0"
