"""Versioned binary state files.

Layout (all little-endian):

    offset  type        field
    0       8 bytes     magic b"KGSTATE\\0"
    8       uint32      format version (1)
    12      uint32      d
    16      uint32      n_x
    20      uint32      reserved (0)
    24      float64     rho
    32      float64     t
    40      float64     a   (lower endpoint of every axis)
    48      float64     b   (upper endpoint)
    56      float64[2]  (re, im) pairs of u, then of v

Coefficients are written in row-major order over mode indices
xi_k = -n/2, ..., n/2 - 1 on every axis (the FFT-shifted ordering).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .integrators import State
from .spectral import TorusGrid

MAGIC = b"KGSTATE\0"
VERSION = 1
_HEADER = struct.Struct("<8sIIII4d")


class StateFileError(ValueError):
    pass


def write_state(path, state: State, rho: float) -> None:
    g = state.grid
    header = _HEADER.pack(MAGIC, VERSION, g.d, g.n_x, 0, float(rho), float(state.t), float(g.a), float(g.b))
    body = []
    for field in (state.u, state.v):
        c = np.fft.fftshift(field.coeffs)
        body.append(np.ascontiguousarray(c).astype("<c16").tobytes())
    Path(path).write_bytes(header + b"".join(body))


def read_state(path) -> tuple[State, float]:
    """Returns ``(state, rho)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise StateFileError("file too short for header")
    magic, version, d, n_x, _, rho, t, a, b = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise StateFileError("bad magic; not a kgtrig state file")
    if version != VERSION:
        raise StateFileError(f"unsupported state file version {version}")
    grid = TorusGrid(d, n_x, a, b)
    n = grid.size
    expect = _HEADER.size + 2 * 16 * n
    if len(raw) != expect:
        raise StateFileError(f"expected {expect} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).astype(complex)
    u = np.fft.ifftshift(data[:n].reshape(grid.shape))
    v = np.fft.ifftshift(data[n:].reshape(grid.shape))
    return State.from_arrays(t, grid, u, v), rho
