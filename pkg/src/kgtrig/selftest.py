"""Fast invariant battery run by ``kgtrig selftest``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import opfunc
from .harness import error_metric, one_step_defects
from .integrators import METHODS, State, energy, evolve, exact_linear_flow
from .problems import Nonlinearity, Problem, catalogue, rough_data, smooth_data
from .spectral import TorusGrid, backward, coeff_sobolev_norm

PASS, FAIL, SKIP = "PASS", "FAIL", "SKIP"

# (function, argument, exact value)
_SPOT_VALUES = [
    ("sinc", 1.0, 0.8414709848078965),
    ("phi1", 1.0, 0.42073549240394825),
    ("phi2", 1.0, (math.cos(1.0) + math.sin(1.0)) / 2.0),
    ("psi1", 0.0, 1.0 / 6.0),
    ("psi1", math.pi, 1.0 / (2.0 * math.pi**2)),
    ("psi1", 1.0, (math.sin(1.0) - math.cos(1.0)) / 2.0),
    ("psi2", 0.0, 1.0 / 24.0),
    ("psi2", math.pi, 2.0 / math.pi**4),
    ("psi2", 1.0, 1.0 - math.cos(1.0) - math.sin(1.0) / 2.0),
]

_BRANCHED = {
    "sinc": opfunc.sinc,
    "psi1": opfunc.psi1,
    "psi2": opfunc.psi2,
    "trig_phi": lambda m: opfunc.trig_phi(4, m),
}


@dataclass
class CheckResult:
    name: str
    status: str
    detail: str
    seconds: float = 0.0


def _check_spot_values():
    worst = 0.0
    for name, m, exact in _SPOT_VALUES:
        worst = max(worst, abs(getattr(opfunc, name)(m) - exact))
    # identities between the scheme coefficients and the phi-function family
    m = np.linspace(0.0, 40.0, 4001)
    g2, g3, g4 = (opfunc.trig_phi(j, m) for j in (2, 3, 4))
    worst = max(
        worst,
        float(np.abs(opfunc.psi1(m) - 0.5 * (g2 - g3)).max()),
        float(np.abs(opfunc.psi2(m) - (0.5 * g3 - g4)).max()),
    )
    return worst <= 1e-12, f"max abs deviation {worst:.2e} (tol 1e-12)"


def _check_branch_continuity():
    worst, where = 0.0, ""
    for name, fn in _BRANCHED.items():
        tau = opfunc.THRESHOLDS[name]
        below = np.nextafter(tau, 0.0)
        jump = abs(fn(below) - fn(tau))
        if jump > worst:
            worst, where = jump, name
    return worst <= 1e-12, f"max jump {worst:.2e} at {where or '-'} threshold (tol 1e-12)"


def _check_parseval():
    grid = TorusGrid(1, 64)
    data = rough_data(2.0, 7, grid)
    values = backward(grid, data.u0.coeffs)
    physical = math.sqrt(grid.cell_volume * float(np.sum(values**2)))
    spectral = coeff_sobolev_norm(grid, data.u0.coeffs, 0.0)
    rel = abs(physical - spectral) / spectral
    return rel <= 1e-13, f"relative mismatch {rel:.2e} (tol 1e-13)"


def _check_linear_exactness():
    grid = TorusGrid(1, 64)
    problem = Problem(grid, catalogue("zero"), rho=1.0)
    data = rough_data(2.0, 3, grid)
    s0 = State(0.0, data.u0, data.v0)
    exact = exact_linear_flow(s0, 1.0, 1.0)
    worst = 0.0
    for method in METHODS:
        if method == "rk4":
            continue
        for k in (1, 4):
            worst = max(worst, error_metric(evolve(s0, 1.0, method, 2.0**-k, problem).final, exact))
    return worst <= 1e-10, f"max error {worst:.2e} over exponential steppers (tol 1e-10)"


def _check_defect_ratio():
    grid = TorusGrid(1, 32)
    problem = Problem(grid, catalogue("sine"), rho=1.0)
    data = smooth_data(grid)
    d = one_step_defects(State(0.0, data.u0, data.v0), problem, [2.0**-k for k in (3, 4, 5, 6)])
    ratios = [d[i] / d[i + 1] for i in range(len(d) - 1)]
    ok = all(12.0 <= r <= 20.0 for r in ratios)
    return ok, "ratios " + ", ".join(f"{r:.2f}" for r in ratios) + " (want 12..20)"


def _energy_check(nonlinearity: Nonlinearity):
    def check():
        if nonlinearity.antiderivative is None:
            return None, f"nonlinearity {nonlinearity.name!r} has no antiderivative; energy not defined"
        grid = TorusGrid(1, 32)
        problem = Problem(grid, nonlinearity, rho=0.0)
        data = smooth_data(grid)
        s0 = State(0.0, data.u0, data.v0)
        e0 = energy(s0, problem)
        e1 = energy(evolve(s0, 1.0, "lri3", 2.0**-6, problem).final, problem)
        drift = abs(e1 - e0) / max(abs(e0), 1e-300)
        return drift <= 1e-5, f"relative drift {drift:.2e} at h = 2^-6 (tol 1e-5)"

    return check


def run_selftest(
    nonlinearity: Optional[Nonlinearity] = None,
    thresholds: Optional[dict] = None,
) -> list[CheckResult]:
    """Run every check; ``thresholds`` temporarily overrides opfunc branch points."""
    checks: list[tuple[str, Callable]] = [
        ("opfunc spot values", _check_spot_values),
        ("branch continuity", _check_branch_continuity),
        ("parseval", _check_parseval),
        ("linear exactness", _check_linear_exactness),
        ("one-step defect ratio", _check_defect_ratio),
        ("energy drift", _energy_check(nonlinearity or catalogue("sine"))),
    ]
    results = []
    with opfunc.override_thresholds(**(thresholds or {})):
        for name, fn in checks:
            t0 = time.perf_counter()
            try:
                ok, detail = fn()
                status = SKIP if ok is None else (PASS if ok else FAIL)
            except Exception as exc:  # a crashing check is a failed check
                status, detail = FAIL, f"{type(exc).__name__}: {exc}"
            results.append(CheckResult(name, status, detail, time.perf_counter() - t0))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{r.name:<{width}}  {r.status}  {r.seconds:6.2f}s  {r.detail}" for r in results]
    return "\n".join(lines)
