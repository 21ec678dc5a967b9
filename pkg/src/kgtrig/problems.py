"""Problem definitions and initial-data generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .spectral import SpectralField, SymbolTable, TorusGrid, coeff_sobolev_norm

__all__ = [
    "Nonlinearity",
    "catalogue",
    "CATALOGUE_NAMES",
    "Problem",
    "RoughData",
    "rough_data",
    "smooth_data",
    "mode_uniforms",
]

Pointwise = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise nonlinearity with its first two derivatives.

    ``antiderivative`` (F with F' = f) is only needed for the energy diagnostic.
    ``globally_bounded`` records whether f', f'', f''' are bounded on all of R,
    the hypothesis under which third-order convergence is proven.
    """

    name: str
    f: Pointwise
    df: Pointwise
    d2f: Pointwise
    antiderivative: Optional[Pointwise] = None
    globally_bounded: bool = True
    params: dict = field(default_factory=dict)

    def __call__(self, u):
        return self.f(u)


def _zero(u):
    return np.zeros_like(u)


CATALOGUE_NAMES = ("zero", "sine", "cubic")


def catalogue(name: str, lam: float = 1.0) -> Nonlinearity:
    """Built-in nonlinearities: ``zero``, ``sine`` and ``cubic`` (f = lam * u^3)."""
    if name == "zero":
        return Nonlinearity("zero", _zero, _zero, _zero, antiderivative=_zero)
    if name == "sine":
        return Nonlinearity(
            "sine",
            np.sin,
            np.cos,
            lambda u: -np.sin(u),
            antiderivative=lambda u: 1.0 - np.cos(u),
        )
    if name == "cubic":
        lam = float(lam)
        # unbounded derivatives: outside the convergence theory, fine on bounded states
        return Nonlinearity(
            "cubic",
            lambda u: lam * u**3,
            lambda u: 3.0 * lam * u**2,
            lambda u: 6.0 * lam * u,
            antiderivative=lambda u: 0.25 * lam * u**4,
            globally_bounded=False,
            params={"lambda": lam},
        )
    raise KeyError(f"unknown nonlinearity {name!r}; choose from {CATALOGUE_NAMES}")


@dataclass(eq=False)
class Problem:
    """Semilinear Klein-Gordon problem u_tt - Lap u + rho u = f(u) on a torus grid."""

    grid: TorusGrid
    nonlinearity: Nonlinearity
    rho: float = 0.0
    dealias: bool = False

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")

    @property
    def d(self) -> int:
        return self.grid.d

    @cached_property
    def symbols(self) -> SymbolTable:
        return SymbolTable(self.grid, self.rho)

    def on_grid(self, grid: TorusGrid) -> "Problem":
        """Same equation on another resolution."""
        return Problem(grid, self.nonlinearity, self.rho, self.dealias)


# --- mode-keyed random numbers ------------------------------------------------



def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _zigzag(i: np.ndarray) -> np.ndarray:
    i = i.astype(np.int64)
    return np.where(i >= 0, 2 * i, -2 * i - 1).astype(np.uint64)


def mode_uniforms(seed: int, stream: int, modes: tuple[np.ndarray, ...]) -> np.ndarray:
    """Uniform [0, 1) numbers keyed by (seed, stream, integer mode vector).

    The value attached to a mode never depends on the grid it is generated on,
    so refining the grid extends the data instead of reshuffling it.
    """
    h = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(0x5EED))
    h = np.broadcast_to(h, modes[0].shape).astype(np.uint64)
    for comp in modes:
        h = _splitmix64(h ^ _zigzag(comp))
    h = _splitmix64(h ^ np.uint64(stream))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _hermitian_uniform(seed: int, stream: int, modes: tuple[np.ndarray, ...]) -> np.ndarray:
    """Complex uniforms on [0,1)^2 with Z(-xi) = conj(Z(xi)) and real Z(0)."""
    positive = np.zeros(modes[0].shape, dtype=bool)
    decided = np.zeros(modes[0].shape, dtype=bool)
    for comp in modes:
        positive |= ~decided & (comp > 0)
        decided |= comp != 0
    zero = ~decided
    sign = np.where(positive | zero, 1, -1)
    canon = tuple(sign * comp for comp in modes)
    re = mode_uniforms(seed, 2 * stream, canon)
    im = mode_uniforms(seed, 2 * stream + 1, canon)
    z = re + 1j * np.where(positive, im, np.where(zero, 0.0, -im))
    return z


# Normalisation box (modes |xi_k| < K per axis); fixed so data does not depend on n_x.
_NORM_BOX = {1: 2**15, 2: 2**9, 3: 2**6}

PROFILES = ("sobolev", "power")


def _decay_exponent(profile: str, theta: float, d: int) -> float:
    if profile == "sobolev":
        # |u_hat|^2 ~ |xi|^{-2 theta - d - 1}: in H^s exactly for s < theta + 1/2
        return -(2.0 * theta + d + 1.0) / 4.0
    if profile == "power":
        return -theta / 2.0
    raise ValueError(f"unknown profile {profile!r}; choose from {PROFILES}")


def _raw_coeffs(grid: TorusGrid, theta: float, seed: int, stream: int, profile: str, modes):
    k2 = sum(((2.0 * np.pi / grid.length) * m) ** 2 for m in modes)
    z = _hermitian_uniform(seed, stream, modes)
    return z * (1.0 + k2) ** _decay_exponent(profile, theta, grid.d)


def _norm_constant(grid: TorusGrid, theta: float, nu: float, seed: int, stream: int, profile: str):
    K = _NORM_BOX[grid.d]
    idx = np.arange(-K + 1, K)
    modes = tuple(np.meshgrid(*([idx] * grid.d), indexing="ij"))
    c = _raw_coeffs(grid, theta, seed, stream, profile, modes)
    k2 = sum(((2.0 * np.pi / grid.length) * m) ** 2 for m in modes)
    return math.sqrt(grid.volume * float(np.sum((1.0 + k2) ** nu * np.abs(c) ** 2)))


@dataclass(frozen=True, eq=False)
class RoughData:
    theta: float
    seed: int
    u0: SpectralField
    v0: SpectralField
    profile: str = "sobolev"


def smooth_data(grid: TorusGrid) -> RoughData:
    """Smooth preset (theta = inf): u0 = cos(x_1), v0 = 0."""
    c = np.zeros(grid.shape, dtype=complex)
    one = [0] * grid.d
    one[0] = 1
    # cos(k1 x) with k1 the fundamental wavenumber
    c[tuple(one)] = 0.5
    minus = [0] * grid.d
    minus[0] = -1
    c[tuple(minus)] = 0.5
    return RoughData(math.inf, 0, SpectralField(grid, c), SpectralField.zeros(grid), "smooth")


def rough_data(theta: float, seed: int, grid: TorusGrid, profile: str = "sobolev") -> RoughData:
    """Random initial data (u0, v0) in H^theta x H^(theta-1).

    Coefficients are ``Z_xi * (1 + |k|^2)^e`` with ``Z`` uniform on the complex
    unit square, Hermitian-symmetrised, and keyed by mode index.  ``profile``
    picks the decay exponent ``e``:

    * ``"sobolev"``: ``e = -(2 theta + d + 1)/4``; the data lie in H^s exactly
      for ``s < theta + 1/2`` and the dyadic-shell energy in H^theta is bounded.
    * ``"power"``: ``e = -theta/2``; rougher, in H^s only for ``s < theta - d/2``.

    Each field is scaled to unit norm (H^theta for u0, H^(theta-1) for v0) over
    a fixed mode box, so shared modes are bit-identical across resolutions.
    The Nyquist layer is zero.
    """
    if math.isinf(theta):
        return smooth_data(grid)
    if not theta > 0.5:
        raise ValueError(f"theta must be > 1/2, got {theta}")
    if grid.size > (2 * _NORM_BOX[grid.d]) ** grid.d:
        raise ValueError("grid exceeds the normalisation box for this dimension")
    modes = grid.mode_indices
    nyq = grid.nyquist_mask
    out = []
    for stream, th in ((0, theta), (1, theta - 1.0)):
        c = _raw_coeffs(grid, th, seed, stream, profile, modes)
        c = c / _norm_constant(grid, th, th, seed, stream, profile)
        c[nyq] = 0.0
        out.append(SpectralField(grid, c))
    return RoughData(float(theta), int(seed), out[0], out[1], profile)


def rough_data_norms(data: RoughData) -> tuple[float, float]:
    g = data.u0.grid
    return (
        coeff_sobolev_norm(g, data.u0.coeffs, data.theta),
        coeff_sobolev_norm(g, data.v0.coeffs, data.theta - 1.0),
    )
