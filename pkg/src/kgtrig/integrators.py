"""Time steppers for u_tt + A u = f(u), A = -Lap + rho, in Fourier space.

``lri3`` is the third-order low-regularity trigonometric scheme.  ``etdrk3``,
``gautschi2`` and ``strang2`` are classical baselines, and ``rk4`` (explicit
Runge-Kutta on the first-order system) is a method-independent reference.

All steppers work on raw coefficient arrays; nonlinear terms are evaluated
pointwise on the collocation grid (optionally 3/2 zero-padded) and transformed
back, i.e. trigonometric interpolation.
"""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import opfunc
from .problems import Problem
from .spectral import SpectralField, TorusGrid, backward, coeff_sobolev_norm, forward

__all__ = [
    "State",
    "Trajectory",
    "Stepper",
    "METHODS",
    "BlowUpError",
    "MissingAntiderivativeError",
    "get_stepper",
    "lri3_step",
    "etdrk3_step",
    "gautschi2_step",
    "strang2_step",
    "rk4_step",
    "rk4ref_evolve",
    "rk4_stability_limit",
    "evolve",
    "energy",
    "exact_linear_flow",
]

METHODS = ("lri3", "etdrk3", "gautschi2", "strang2", "rk4")

# imaginary-axis stability boundary of classical RK4
RK4_IMAG_BOUND = 2.0 * math.sqrt(2.0)


class BlowUpError(RuntimeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, method: str, step: int, history: list[float]):
        self.method = method
        self.step = step
        self.history = list(history)
        tail = ", ".join(f"{x:.3e}" for x in self.history[-8:])
        super().__init__(f"{method}: non-finite state at step {step}; recent max|coeff|: [{tail}]")


class MissingAntiderivativeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class State:
    t: float
    u: SpectralField
    v: SpectralField

    def __post_init__(self):
        if self.u.grid != self.v.grid:
            raise ValueError("u and v must share one grid")

    @property
    def grid(self) -> TorusGrid:
        return self.u.grid

    @classmethod
    def from_arrays(cls, t: float, grid: TorusGrid, u: np.ndarray, v: np.ndarray) -> "State":
        return cls(float(t), SpectralField(grid, u), SpectralField(grid, v))


class _Collocation:
    """Grid evaluation of nonlinear terms, with optional 3/2-rule padding."""

    def __init__(self, grid: TorusGrid, dealias: bool):
        self.grid = grid
        self.dealias = dealias
        n = grid.n_x
        if dealias:
            self.m = 3 * n // 2
            half = n // 2
            keep = np.r_[0:half, -half + 1 : 0]
            self._src = np.ix_(*([keep % n] * grid.d))
            self._dst = np.ix_(*([keep % self.m] * grid.d))
            self._scale = (self.m / n) ** grid.d
        self._axes = tuple(range(1, grid.d + 1))
        self._phase = grid.phase
        self._inv_phase = 1.0 / grid.phase

    def phys(self, c: np.ndarray) -> np.ndarray:
        if not self.dealias:
            return backward(self.grid, c)
        big = np.zeros((self.m,) * self.grid.d, dtype=complex)
        big[self._dst] = (c / self.grid.phase)[self._src]
        return np.fft.ifftn(big, norm="forward").real

    def spec(self, values: np.ndarray) -> np.ndarray:
        if not self.dealias:
            return forward(self.grid, values)
        big = np.fft.fftn(values, norm="forward")
        out = np.zeros(self.grid.shape, dtype=complex)
        out[self._src] = big[self._dst]
        return out * self.grid.phase

    def phys_many(self, stack: np.ndarray) -> np.ndarray:
        """``phys`` applied to every leading-axis slice of ``stack`` in one transform."""
        if self.dealias:
            return np.stack([self.phys(c) for c in stack])
        if self.grid.d == 1:
            return np.fft.ifft(stack * self._inv_phase, norm="forward").real
        return np.fft.ifftn(stack * self._inv_phase, axes=self._axes, norm="forward").real

    def spec_many(self, stack: np.ndarray) -> np.ndarray:
        if self.dealias:
            return np.stack([self.spec(x) for x in stack])
        if self.grid.d == 1:
            return np.fft.fft(stack, norm="forward") * self._phase
        return np.fft.fftn(stack, axes=self._axes, norm="forward") * self._phase

    def grad_sq(self, c: np.ndarray) -> np.ndarray:
        acc = None
        for k in self.grid.derivative_wavenumbers:
            du = self.phys(1j * k * c)
            acc = du * du if acc is None else acc + du * du
        return acc


class Stepper:
    """One method at one stepsize for one problem; multipliers precomputed."""

    def __init__(self, method: str, h: float, problem: Problem):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
        if h == 0 or not math.isfinite(h):
            raise ValueError(f"invalid stepsize {h}")
        if method != "strang2" and h < 0:
            raise ValueError("negative stepsizes are only supported by strang2")
        self.method = method
        self.h = float(h)
        self.problem = problem
        self.grid = problem.grid
        self.col = _Collocation(problem.grid, problem.dealias)
        nl = problem.nonlinearity
        self.f, self.df, self.d2f = nl.f, nl.df, nl.d2f
        self.omega = problem.symbols.omega
        getattr(self, f"_init_{method}")()
        self._raw = getattr(self, f"_step_{method}")

    # -- helpers ---------------------------------------------------------------

    def _nl(self, u: np.ndarray) -> np.ndarray:
        return self.col.spec(self.f(self.col.phys(u)))

    def _linear(self, tau: float):
        m = abs(tau) * self.omega
        s = opfunc.sinc(m)
        return np.cos(m), tau * s, -tau * self.omega**2 * s

    # -- lri3 ------------------------------------------------------------------

    def _init_lri3(self):
        h = self.h
        self.coeffs = c = opfunc.build_coefficients(self.problem.symbols, h)
        self._uu, self._uv = c.cos_h, h * c.sinc_h
        self._vu, self._vv = -c.omega_sinc, c.cos_h
        self._u_f, self._u_dfv, self._u_F1 = h**2 * c.phi1, h**3 * c.psi1, h**4 * c.psi2
        self._dk = self.grid.derivative_wavenumbers
        self._v_f, self._v_dfv, self._v_F1 = h * c.phi2, h**2 * c.phi1, h**3 * c.psi1

    def _step_lri3(self, u, v):
        col, rho = self.col, self.problem.rho
        d = self.grid.d
        # one batched inverse transform: u, v and the gradient components of u
        vals = col.phys_many(np.stack([u, v] + [1j * k * u for k in self._dk]))
        U, V = vals[0], vals[1]
        G = np.sum(vals[2:] ** 2, axis=0) if d > 1 else vals[2] ** 2
        fU = self.f(U)
        dfU = self.df(U)
        prods = [fU, dfU * V, self.d2f(U) * (V * V - G), dfU * fU]
        if rho != 0.0:
            prods.append(dfU * U)
        hats = col.spec_many(np.stack(prods))
        f_hat, dfv_hat, F1_hat, dff_hat = hats[0], hats[1], hats[2], hats[3]
        if rho != 0.0:
            F1_hat = F1_hat + rho * (f_hat - hats[4])
        u_new = self._uu * u + self._uv * v + self._u_f * f_hat + self._u_dfv * dfv_hat + self._u_F1 * F1_hat
        v_new = (
            self._vu * u
            + self._vv * v
            + self._v_f * f_hat
            + self._v_dfv * dfv_hat
            + self._v_F1 * (F1_hat + dff_hat)
        )
        return u_new, v_new

    # -- etdrk3 (Cox-Matthews ETD3RK, nodes 0, 1/2, 1) ---------------------------

    def _phi_parts(self, tau, weights):
        """u/v multipliers of tau * sum_k w_k phi_k(tau L) applied to (0, g)."""
        m = tau * self.omega
        g = [opfunc.trig_phi(j, m) for j in range(5)]
        pu = sum(w * g[k + 1] for k, w in zip((1, 2, 3), weights))
        pv = sum(w * g[k] for k, w in zip((1, 2, 3), weights))
        return tau * tau * pu, tau * pv

    def _init_etdrk3(self):
        h = self.h
        self._E = self._linear(h)
        self._E2 = self._linear(h / 2)
        self._a_phi = self._phi_parts(h / 2, (1.0, 0.0, 0.0))
        self._b_phi = self._phi_parts(h, (1.0, 0.0, 0.0))
        self._w_n = self._phi_parts(h, (1.0, -3.0, 4.0))
        self._w_a = self._phi_parts(h, (0.0, 4.0, -8.0))
        self._w_b = self._phi_parts(h, (0.0, -1.0, 4.0))

    def _step_etdrk3(self, u, v):
        cu, cv, cw = self._E
        hu, hv, hw = self._E2
        Nn = self._nl(u)
        au = hu * u + hv * v + self._a_phi[0] * Nn
        Na = self._nl(au)
        bu = cu * u + cv * v + self._b_phi[0] * (2.0 * Na - Nn)
        Nb = self._nl(bu)
        u_new = cu * u + cv * v + self._w_n[0] * Nn + self._w_a[0] * Na + self._w_b[0] * Nb
        v_new = cw * u + cu * v + self._w_n[1] * Nn + self._w_a[1] * Na + self._w_b[1] * Nb
        return u_new, v_new

    # -- gautschi2 ---------------------------------------------------------------

    def _init_gautschi2(self):
        h = self.h
        self._E = self._linear(h)
        m = h * self.omega
        self._g_pos = h * h * opfunc.trig_phi(2, m)  # (h^2/2) sinc^2(h omega / 2)
        self._g_vel0 = 0.5 * h * np.cos(m)
        self._g_vel1 = 0.5 * h

    def _step_gautschi2(self, u, v):
        cu, cv, cw = self._E
        F0 = self._nl(u)
        u_new = cu * u + cv * v + self._g_pos * F0
        F1 = self._nl(u_new)
        v_new = cw * u + cu * v + self._g_vel0 * F0 + self._g_vel1 * F1
        return u_new, v_new

    # -- strang2 -------------------------------------------------------------------

    def _init_strang2(self):
        self._E = self._linear(self.h)

    def _step_strang2(self, u, v):
        cu, cv, cw = self._E
        half = 0.5 * self.h
        v = v + half * self._nl(u)
        u, v = cu * u + cv * v, cw * u + cu * v
        v = v + half * self._nl(u)
        return u, v

    # -- rk4 -----------------------------------------------------------------------

    def _init_rk4(self):
        self._om2 = self.omega**2

    def _rhs(self, u, v):
        return v, -self._om2 * u + self._nl(u)

    def _step_rk4(self, u, v):
        h = self.h
        k1u, k1v = self._rhs(u, v)
        k2u, k2v = self._rhs(u + 0.5 * h * k1u, v + 0.5 * h * k1v)
        k3u, k3v = self._rhs(u + 0.5 * h * k2u, v + 0.5 * h * k2v)
        k4u, k4v = self._rhs(u + h * k3u, v + h * k3v)
        return (
            u + (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
            v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        )

    # -- public --------------------------------------------------------------------

    def step_raw(self, u: np.ndarray, v: np.ndarray):
        return self._raw(u, v)

    def step(self, state: State) -> State:
        if state.grid != self.grid:
            raise ValueError("state grid does not match the problem grid")
        u, v = self._raw(state.u.coeffs, state.v.coeffs)
        _check_finite(self.method, 1, u, v, [])
        return State.from_arrays(state.t + self.h, self.grid, u, v)

    def advance(self, u, v, n_steps: int, history_len: int = 16):
        """Take ``n_steps`` steps on raw arrays with blow-up detection."""
        hist = collections.deque(maxlen=history_len)
        # overflow is detected through the amplitude history, not numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(n_steps):
                u, v = self._raw(u, v)
                mx = max(float(np.abs(u).max()), float(np.abs(v).max()))
                hist.append(mx)
                if not math.isfinite(mx):
                    raise BlowUpError(self.method, i + 1, list(hist))
        return u, v


def _check_finite(method, step, u, v, history):
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise BlowUpError(method, step, history)


def get_stepper(method: str, h: float, problem: Problem) -> Stepper:
    """Stepper with coefficient arrays cached on the problem, keyed by (method, h)."""
    cache = problem.__dict__.setdefault("_stepper_cache", {})
    key = (method, float(h))
    st = cache.get(key)
    if st is None:
        st = cache[key] = Stepper(method, h, problem)
    return st


def lri3_step(state: State, h: float, problem: Problem, coeffs: Optional[opfunc.CoefficientSet] = None) -> State:
    st = get_stepper("lri3", h, problem)
    if coeffs is not None and coeffs.h != st.h:
        raise ValueError("coefficient set was built for a different stepsize")
    return st.step(state)


def etdrk3_step(state: State, h: float, problem: Problem) -> State:
    return get_stepper("etdrk3", h, problem).step(state)


def gautschi2_step(state: State, h: float, problem: Problem) -> State:
    return get_stepper("gautschi2", h, problem).step(state)


def strang2_step(state: State, h: float, problem: Problem) -> State:
    return get_stepper("strang2", h, problem).step(state)


def rk4_step(state: State, h: float, problem: Problem) -> State:
    return get_stepper("rk4", h, problem).step(state)


def _n_steps(span: float, h: float) -> int:
    n = int(round(span / h))
    if n < 0 or abs(n * h - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(f"time span {span!r} is not an integer multiple of h = {h!r}")
    return n


def rk4_stability_limit(problem: Problem) -> float:
    return RK4_IMAG_BOUND / problem.symbols.omega_max


def rk4ref_evolve(state: State, t_end: float, h_fine: float, problem: Problem) -> State:
    """Reference solution by classical RK4 on the spectrally discretised system."""
    limit = rk4_stability_limit(problem)
    if h_fine > limit:
        raise ValueError(
            f"h_fine = {h_fine:.3e} exceeds the RK4 stability bound 2*sqrt(2)/omega_max = {limit:.3e}"
        )
    return evolve(state, t_end, "rk4", h_fine, problem).final


def exact_linear_flow(state: State, t_end: float, rho: float) -> State:
    """Closed-form solution for f = 0: mode-wise rotation."""
    grid = state.grid
    om = np.sqrt(rho + grid.k_squared)
    tau = t_end - state.t
    m = abs(tau) * om
    s = opfunc.sinc(m)
    c = np.cos(m)
    u, v = state.u.coeffs, state.v.coeffs
    return State.from_arrays(t_end, grid, c * u + tau * s * v, -tau * om**2 * s * u + c * v)


@dataclass
class Trajectory:
    states: list[State]
    diagnostics: dict[str, list[float]] = field(default_factory=dict)

    @property
    def final(self) -> State:
        return self.states[-1]

    @property
    def times(self) -> list[float]:
        return [s.t for s in self.states]


DIAGNOSTICS: dict[str, Callable[[State, Problem], float]] = {}


def energy(state: State, problem: Problem) -> float:
    """E = 1/2 int (v^2 + |grad u|^2 + rho u^2) - int F(u), with F' = f."""
    F = problem.nonlinearity.antiderivative
    if F is None:
        raise MissingAntiderivativeError(
            f"nonlinearity {problem.nonlinearity.name!r} has no registered antiderivative"
        )
    grid = state.grid
    u, v = state.u.coeffs, state.v.coeffs
    quad = 0.5 * grid.volume * float(
        np.sum(np.abs(v) ** 2 + (grid.k_squared + problem.rho) * np.abs(u) ** 2)
    )
    pot = grid.cell_volume * float(np.sum(F(backward(grid, u))))
    return quad - pot


DIAGNOSTICS["energy"] = energy
DIAGNOSTICS["h1_norm_u"] = lambda s, p: coeff_sobolev_norm(s.grid, s.u.coeffs, 1.0)
DIAGNOSTICS["l2_norm_v"] = lambda s, p: coeff_sobolev_norm(s.grid, s.v.coeffs, 0.0)
DIAGNOSTICS["max_abs_u"] = lambda s, p: float(np.abs(backward(s.grid, s.u.coeffs)).max())


def evolve(
    state: State,
    t_end: float,
    method: str,
    h: float,
    problem: Problem,
    sample_every: Optional[int] = None,
    diagnostics: Iterable[str] = (),
) -> Trajectory:
    """Step from ``state.t`` to ``t_end`` with ``n = (t_end - t)/h`` steps.

    The trajectory keeps the initial and final state plus every
    ``sample_every``-th state.  Sample times are ``t0 + k h`` (no running sum).
    """
    diagnostics = list(diagnostics)
    for name in diagnostics:
        if name not in DIAGNOSTICS:
            raise ValueError(f"unknown diagnostic {name!r}; choose from {sorted(DIAGNOSTICS)}")
    n = _n_steps(t_end - state.t, h)
    st = get_stepper(method, h, problem)
    t0 = state.t
    traj = Trajectory([state], {name: [] for name in diagnostics})

    def record(s):
        for name in diagnostics:
            traj.diagnostics[name].append(DIAGNOSTICS[name](s, problem))

    record(state)
    chunk = n if not sample_every else int(sample_every)
    u, v = state.u.coeffs, state.v.coeffs
    done = 0
    while done < n:
        todo = min(chunk, n - done)
        try:
            u, v = st.advance(u, v, todo)
        except BlowUpError as exc:
            raise BlowUpError(exc.method, done + exc.step, exc.history) from None
        done += todo
        s = State.from_arrays(t0 + done * h, state.grid, u, v)
        traj.states.append(s)
        record(s)
    if n == 0:
        traj.states.append(state)
        record(state)
    return traj
