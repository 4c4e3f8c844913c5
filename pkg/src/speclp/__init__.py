"""Spectral calculus for one-dimensional Schrödinger, Hermite and Laguerre operators."""
from .config import DEFAULT, Settings
from .core import Grid1D, Potential, SampledFunction, continuous_fourier, integrate, make_potential, weighted_norm

__version__ = "0.1.0"

__all__ = [
    "DEFAULT",
    "Settings",
    "Grid1D",
    "Potential",
    "SampledFunction",
    "continuous_fourier",
    "integrate",
    "make_potential",
    "weighted_norm",
]
