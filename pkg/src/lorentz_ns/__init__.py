"""Lorentz-space norms, singular integrals and a periodic mild Navier-Stokes solver."""

__version__ = "0.1.0"
