"""Numerical laboratory for the 1-D stochastic nonlocal transport equation

    du + (Hu) u_x dt = h(t, u) dW

on a periodic domain: spectral operators, concrete noise families, path
integration with blow-up detection, exponential-martingale change of measure,
and high/low frequency approximate-solution experiments.
"""

from .spectral import SpectralGrid, Field

__all__ = ["SpectralGrid", "Field"]
__version__ = "0.1.0"
