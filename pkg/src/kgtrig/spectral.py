"""Fourier pseudospectral core on the periodic torus.

Coefficients are stored as full complex arrays in numpy FFT order and are
normalised so that the zero mode equals the mean of the function, i.e.

    u_hat(xi) = L^{-d} * integral exp(-i x . k) u(x) dx,   k = 2 pi xi / L,

with x the absolute coordinate (the grid offset ``a`` is folded into a phase).
All operator functions of ``A = -Laplace + rho`` act diagonally through the
physical wavenumbers ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "TorusGrid",
    "SpectralField",
    "SymbolTable",
    "to_spectral",
    "to_physical",
    "sobolev_norm",
    "apply_symbol",
    "gradient_squared",
    "project",
    "HermitianSymmetryError",
]

HERMITIAN_RTOL = 1e-12


class HermitianSymmetryError(ValueError):
    """Raised when coefficients no longer describe a real function."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """Uniform tensor grid on ``[a, b)^d`` with periodic identification.

    Args:
        d: Spatial dimension (1, 2 or 3).
        n_x: Points per axis; a power of two, at least 4.
        a: Lower endpoint of every axis.
        b: Upper endpoint of every axis.
    """

    d: int = 1
    n_x: int = 256
    a: float = -np.pi
    b: float = np.pi

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        if not _is_power_of_two(self.n_x) or self.n_x < 4:
            raise ValueError(f"n_x must be a power of two >= 4, got {self.n_x}")
        if not self.b > self.a:
            raise ValueError(f"need b > a, got a={self.a}, b={self.b}")

    def __eq__(self, other):
        if not isinstance(other, TorusGrid):
            return NotImplemented
        return (self.d, self.n_x, self.a, self.b) == (other.d, other.n_x, other.a, other.b)

    def __hash__(self):
        return hash((self.d, self.n_x, self.a, self.b))

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.d

    @property
    def size(self) -> int:
        return self.n_x**self.d

    @property
    def volume(self) -> float:
        return self.length**self.d

    @property
    def cell_volume(self) -> float:
        return (self.length / self.n_x) ** self.d

    @cached_property
    def nodes_1d(self) -> np.ndarray:
        return self.a + np.arange(self.n_x) * (self.length / self.n_x)

    @cached_property
    def nodes(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis (``indexing='ij'``)."""
        return tuple(np.meshgrid(*([self.nodes_1d] * self.d), indexing="ij", sparse=True))

    @cached_property
    def mode_indices_1d(self) -> np.ndarray:
        """Integer mode numbers in FFT order: 0, 1, ..., n/2-1, -n/2, ..., -1."""
        return np.fft.fftfreq(self.n_x, 1.0 / self.n_x).astype(np.int64)

    @cached_property
    def mode_indices(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.mode_indices_1d] * self.d), indexing="ij"))

    @cached_property
    def wavenumbers_1d(self) -> np.ndarray:
        return (2.0 * np.pi / self.length) * self.mode_indices_1d

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Physical wavenumbers per axis, broadcastable to ``shape``."""
        k = self.wavenumbers_1d
        out = []
        for axis in range(self.d):
            sh = [1] * self.d
            sh[axis] = self.n_x
            out.append(k.reshape(sh))
        return tuple(out)

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers with the unpaired Nyquist mode zeroed (keeps derivatives real)."""
        k = self.wavenumbers_1d.copy()
        k[self.n_x // 2] = 0.0
        out = []
        for axis in range(self.d):
            sh = [1] * self.d
            sh[axis] = self.n_x
            out.append(k.reshape(sh))
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        ks = np.zeros(self.shape)
        for k in self.wavenumbers:
            ks = ks + k**2
        return ks

    @cached_property
    def phase(self) -> np.ndarray:
        """``exp(-i k . a)``: maps grid-origin DFT coefficients to absolute ones."""
        ph1 = np.exp(-1j * self.wavenumbers_1d * self.a)
        ph = np.ones(self.shape, dtype=complex)
        for axis in range(self.d):
            sh = [1] * self.d
            sh[axis] = self.n_x
            ph = ph * ph1.reshape(sh)
        return ph

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on every mode with at least one component equal to -n/2."""
        mask = np.zeros(self.shape, dtype=bool)
        for idx in self.mode_indices:
            mask |= idx == -(self.n_x // 2)
        return mask

    def refined(self, n_x: int) -> "TorusGrid":
        return TorusGrid(self.d, n_x, self.a, self.b)


@dataclass(eq=False)
class SpectralField:
    """Fourier coefficients of a real function on ``grid`` (FFT order)."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}"
            )

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    def hermitian_defect(self) -> float:
        """Max of |c(xi) - conj(c(-xi))| over paired modes, relative to max |c|."""
        return hermitian_defect(self.grid, self.coeffs)


def _check_same_grid(f: SpectralField, g: SpectralField):
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")


def _reflect(c: np.ndarray) -> np.ndarray:
    """Array ``c(-xi)`` in FFT order (Nyquist index maps to itself)."""
    return np.roll(np.flip(c), 1, axis=tuple(range(c.ndim)))


def hermitian_defect(grid: TorusGrid, c: np.ndarray) -> float:
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return 0.0
    # Nyquist-containing modes are unpaired; the absolute phase can make them non-real.
    diff = np.abs(c - np.conj(_reflect(c)))
    diff[grid.nyquist_mask] = 0.0
    return float(diff.max() / scale)


def to_spectral(grid: TorusGrid, values: np.ndarray) -> SpectralField:
    """Real samples on ``grid`` -> SpectralField (zero mode = mean)."""
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ValueError(f"array shape {values.shape} does not match grid {grid.shape}")
    return SpectralField(grid, forward(grid, values))


def to_physical(field: SpectralField) -> np.ndarray:
    """SpectralField -> real samples; raises if the imaginary residue exceeds 1e-12."""
    grid = field.grid
    z = np.fft.ifftn(field.coeffs / grid.phase, norm="forward")
    scale = max(np.max(np.abs(z.real)), np.finfo(float).tiny)
    if np.max(np.abs(z.imag)) > HERMITIAN_RTOL * scale:
        raise HermitianSymmetryError(
            f"imaginary residue {np.max(np.abs(z.imag)):.3e} relative to {scale:.3e}"
        )
    return z.real


def forward(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Unchecked forward transform on raw arrays (hot path)."""
    return np.fft.fftn(values, norm="forward") * grid.phase


def backward(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Unchecked inverse transform on raw arrays (hot path)."""
    return np.fft.ifftn(coeffs / grid.phase, norm="forward").real


def sobolev_norm(field: SpectralField, nu: float) -> float:
    """``||f||_{H^nu}^2 = L^d * sum (1 + |k|^2)^nu |f_hat|^2``."""
    if nu < 0:
        raise ValueError("nu must be >= 0")
    return coeff_sobolev_norm(field.grid, field.coeffs, nu)


def coeff_sobolev_norm(grid: TorusGrid, coeffs: np.ndarray, nu: float) -> float:
    w = np.abs(coeffs) ** 2
    if nu != 0:
        w = w * (1.0 + grid.k_squared) ** nu
    return float(np.sqrt(grid.volume * np.sum(w)))


def apply_symbol(field: SpectralField, sigma: np.ndarray) -> SpectralField:
    """Diagonal multiplier ``sigma(xi) * f_hat(xi)``."""
    sigma = np.asarray(sigma)
    if sigma.shape != field.grid.shape:
        raise ValueError(f"multiplier shape {sigma.shape} does not match grid {field.grid.shape}")
    return SpectralField(field.grid, sigma * field.coeffs)


def gradient_squared(field: SpectralField) -> np.ndarray:
    """Pointwise ``sum_k (d u / d x_k)^2`` at the grid nodes."""
    return grad_sq_raw(field.grid, field.coeffs)


def grad_sq_raw(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.shape)
    for k in grid.derivative_wavenumbers:
        du = backward(grid, 1j * k * coeffs)
        out += du * du
    return out


def project(field: SpectralField, grid: TorusGrid) -> SpectralField:
    """Restrict (or zero-extend) ``field`` onto ``grid`` by mode index.

    Only modes with every component strictly inside ``|xi| < n/2`` of both grids
    are carried over, so the result is Hermitian with a zero Nyquist layer.
    """
    src = field.grid
    if (src.d, src.a, src.b) != (grid.d, grid.a, grid.b):
        raise ValueError("projection requires the same torus")
    half = min(src.n_x, grid.n_x) // 2
    keep = np.r_[0:half, -half + 1 : 0]
    out = np.zeros(grid.shape, dtype=complex)
    src_idx = np.ix_(*([keep % src.n_x] * src.d))
    dst_idx = np.ix_(*([keep % grid.n_x] * grid.d))
    out[dst_idx] = field.coeffs[src_idx]
    return SpectralField(grid, out)


@dataclass(frozen=True, eq=False)
class SymbolTable:
    """Per-mode frequencies ``omega = sqrt(rho + |k|^2)`` of ``sqrt(A)``."""

    grid: TorusGrid
    rho: float = 0.0
    omega: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        om = np.sqrt(self.rho + self.grid.k_squared)
        om.setflags(write=False)
        object.__setattr__(self, "omega", om)

    @property
    def omega_max(self) -> float:
        return float(self.omega.max())
