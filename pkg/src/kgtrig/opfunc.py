"""Stable scalar/vector evaluation of the trigonometric coefficient functions.

Every function is even and analytic with a removable singularity at 0.  Each is
evaluated by its closed form above a switch threshold and by a truncated Taylor
series (Horner in ``m**2``) below it.  Term counts are chosen so the series
truncation error at the threshold is below 1e-17:

    sinc   4 terms    (tau = 1e-4)
    psi1   8 terms    (tau = 0.25)
    psi2   8 terms    (tau = 0.5)
    g_j    12 terms   (tau = 1.0)
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from .spectral import SymbolTable

__all__ = [
    "sinc",
    "phi1",
    "phi2",
    "psi1",
    "psi2",
    "trig_phi",
    "CoefficientSet",
    "build_coefficients",
    "THRESHOLDS",
    "override_thresholds",
]

THRESHOLDS = {"sinc": 1e-4, "psi1": 0.25, "psi2": 0.5, "trig_phi": 1.0}


def _series(coeffs):
    return np.array([float(c) for c in coeffs])


# sin(m)/m = sum (-1)^k m^2k / (2k+1)!
_SINC = _series(Fraction((-1) ** k, factorial(2 * k + 1)) for k in range(4))
# (sinc m - cos m) / (2 m^2) = sum_j (-1)^j (j+1) m^2j / (2j+3)!
_PSI1 = _series(Fraction((-1) ** j * (j + 1), factorial(2 * j + 3)) for j in range(8))
# (1 - cos m - m sin(m)/2) / m^4 = sum_j (-1)^j (j+1) m^2j / (2j+4)!
_PSI2 = _series(Fraction((-1) ** j * (j + 1), factorial(2 * j + 4)) for j in range(8))
_TRIG_PHI = {
    j: _series(Fraction((-1) ** i, factorial(2 * i + j)) for i in range(12)) for j in range(6)
}


def _horner(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    acc = np.full_like(x, coeffs[-1])
    for c in coeffs[-2::-1]:
        acc = acc * x + c
    return acc


def _branch(m, tau, coeffs, direct):
    scalar = np.ndim(m) == 0
    m = np.abs(np.asarray(m, dtype=float))
    out = np.empty_like(m)
    small = m < tau
    if small.any():
        with np.errstate(under="ignore"):
            out[small] = _horner(coeffs, m[small] ** 2)
    big = ~small
    if big.any():
        out[big] = direct(m[big])
    return float(out) if scalar else out


@contextlib.contextmanager
def override_thresholds(**values):
    """Temporarily replace branch thresholds (used by the self-test hook)."""
    unknown = set(values) - set(THRESHOLDS)
    if unknown:
        raise KeyError(f"unknown thresholds: {sorted(unknown)}")
    saved = dict(THRESHOLDS)
    THRESHOLDS.update(values)
    try:
        yield
    finally:
        THRESHOLDS.clear()
        THRESHOLDS.update(saved)


def sinc(m):
    """sin(m)/m with sinc(0) = 1."""
    return _branch(m, THRESHOLDS["sinc"], _SINC, lambda x: np.sin(x) / x)


def phi1(m):
    return 0.5 * sinc(m)


def phi2(m):
    return 0.5 * (np.cos(m) + sinc(m))


def _psi1_direct(x):
    return (np.sin(x) / x - np.cos(x)) / (2.0 * x * x)


def psi1(m):
    """(sinc m - cos m) / (2 m^2); limit 1/6 at 0."""
    return _branch(m, THRESHOLDS["psi1"], _PSI1, _psi1_direct)


def _psi2_direct(x):
    return (1.0 - np.cos(x) - 0.5 * x * np.sin(x)) / x**4


def psi2(m):
    """(1 - cos m - (m/2) sin m) / m^4; limit 1/24 at 0."""
    return _branch(m, THRESHOLDS["psi2"], _PSI2, _psi2_direct)


def trig_phi(j: int, m):
    """``g_j(m) = sum_i (-1)^i m^2i / (2i+j)!`` for ``j = 0..5``.

    These are the real/imaginary parts of the exponential-integrator phi
    functions on the imaginary axis: ``phi_k(i m) = g_k(m) + i m g_{k+1}(m)``.
    ``g_0 = cos``, ``g_1 = sinc``, ``g_2 = (1 - cos m)/m^2``, ...
    """
    if j == 0:
        return np.cos(m) if np.ndim(m) else float(np.cos(m))
    if j == 1:
        return sinc(m)
    if j not in _TRIG_PHI:
        raise ValueError(f"trig_phi defined for j = 0..5, got {j}")

    def direct(x):
        # g_j = (1/(j-2)! - g_{j-2}) / m^2
        return (1.0 / factorial(j - 2) - trig_phi(j - 2, x)) / (x * x)

    return _branch(m, THRESHOLDS["trig_phi"], _TRIG_PHI[j], direct)


@dataclass(frozen=True)
class CoefficientSet:
    """Per-mode multipliers of the third-order scheme for one stepsize."""

    h: float
    cos_h: np.ndarray
    sinc_h: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    omega_sinc: np.ndarray  # symbol of A h sinc(h sqrt(A)), i.e. omega^2 h sinc(h omega)


def build_coefficients(symbols: SymbolTable, h: float) -> CoefficientSet:
    if not h > 0:
        raise ValueError(f"stepsize must be positive, got {h}")
    m = h * symbols.omega
    s = sinc(m)
    coeffs = CoefficientSet(
        h=float(h),
        cos_h=np.cos(m),
        sinc_h=s,
        phi1=0.5 * s,
        phi2=phi2(m),
        psi1=psi1(m),
        psi2=psi2(m),
        omega_sinc=symbols.omega**2 * h * s,
    )
    for name in ("cos_h", "sinc_h", "phi1", "phi2", "psi1", "psi2", "omega_sinc"):
        arr = getattr(coeffs, name)
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite entries in coefficient array {name}")
        arr.setflags(write=False)
    return coeffs
