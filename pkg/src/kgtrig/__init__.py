"""Fourier pseudospectral solver for the semilinear Klein-Gordon equation
u_tt - Lap u + rho u = f(u) on the periodic torus, built around a third-order
low-regularity trigonometric integrator, with baselines and a convergence
harness."""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    SpectralField,
    SymbolTable,
    TorusGrid,
    apply_symbol,
    gradient_squared,
    sobolev_norm,
    to_physical,
    to_spectral,
)
from .problems import Problem, catalogue, rough_data, smooth_data  # noqa: E402
from .integrators import State, energy, evolve, rk4ref_evolve  # noqa: E402

__all__ = [
    "SpectralField",
    "SymbolTable",
    "TorusGrid",
    "apply_symbol",
    "gradient_squared",
    "sobolev_norm",
    "to_physical",
    "to_spectral",
    "Problem",
    "catalogue",
    "rough_data",
    "smooth_data",
    "State",
    "energy",
    "evolve",
    "rk4ref_evolve",
]
