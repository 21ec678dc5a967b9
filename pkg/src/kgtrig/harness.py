"""Convergence, spatial-accuracy and efficiency studies."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .integrators import METHODS, State, energy, evolve, get_stepper, rk4_stability_limit
from .problems import Problem, catalogue, rough_data
from .spectral import TorusGrid, coeff_sobolev_norm, project

__all__ = [
    "ErrorValue",
    "error_metric",
    "error_components",
    "FitResult",
    "OrderFitError",
    "fit_order",
    "StudySpec",
    "ConvergenceReport",
    "temporal_study",
    "spatial_study",
    "efficiency_study",
    "one_step_defects",
    "energy_drift",
]

REF_NORM_FLOOR = 1e-14
FLOOR_FACTOR = 100.0


# --- error metric ---------------------------------------------------------------


@dataclass(frozen=True)
class ErrorValue:
    err: float
    u_part: float
    v_part: float
    flags: tuple[str, ...] = ()


def _relative(diff_norm: float, ref_norm: float, label: str, flags: list):
    if ref_norm < REF_NORM_FLOOR:
        flags.append(f"absolute_{label}")
        return diff_norm
    return diff_norm / ref_norm


def error_components(numeric: State, reference: State, time_tol: float = 1e-9) -> ErrorValue:
    """Relative H^1 error of u plus relative L^2 error of v."""
    if numeric.grid != reference.grid:
        raise ValueError("numeric and reference states live on different grids")
    if abs(numeric.t - reference.t) > time_tol * max(1.0, abs(reference.t)):
        raise ValueError(f"time mismatch: {numeric.t} vs {reference.t}")
    g = reference.grid
    flags: list[str] = []
    eu = _relative(
        coeff_sobolev_norm(g, numeric.u.coeffs - reference.u.coeffs, 1.0),
        coeff_sobolev_norm(g, reference.u.coeffs, 1.0),
        "u",
        flags,
    )
    ev = _relative(
        coeff_sobolev_norm(g, numeric.v.coeffs - reference.v.coeffs, 0.0),
        coeff_sobolev_norm(g, reference.v.coeffs, 0.0),
        "v",
        flags,
    )
    return ErrorValue(eu + ev, eu, ev, tuple(flags))


def error_metric(numeric: State, reference: State) -> float:
    return error_components(numeric, reference).err


# --- order fitting --------------------------------------------------------------


class OrderFitError(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residual: float  # RMS of log2 residuals
    used: tuple[float, ...]
    excluded: tuple[tuple[float, str], ...] = ()


def fit_order(points: Iterable[tuple[float, float]], window: Optional[tuple[float, float]] = None) -> FitResult:
    """Least-squares slope of log2(err) against -k.

    For ``err = C 2^{-p k}`` the slope is ``p``.  Points outside ``window``
    (inclusive) are ignored; zero, negative or non-finite errors are excluded
    and reported.
    """
    ks, logs, excluded = [], [], []
    for k, e in points:
        if window is not None and not (window[0] <= k <= window[1]):
            continue
        if not (math.isfinite(e) and e > 0):
            excluded.append((k, "nonpositive_or_nan"))
            continue
        ks.append(float(k))
        logs.append(math.log2(e))
    if len(ks) < 3:
        raise OrderFitError(f"need at least 3 usable points, got {len(ks)}")
    x = -np.asarray(ks)
    y = np.asarray(logs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return FitResult(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))), tuple(ks), tuple(excluded))


# --- study specification -------------------------------------------------------


@dataclass
class StudySpec:
    """Everything that defines a study; echoed verbatim into every report."""

    nonlinearity: str = "sine"
    lam: float = 1.0
    d: int = 1
    rho: float = 0.0
    a: float = -math.pi
    b: float = math.pi
    thetas: tuple[float, ...] = (2.0,)
    seeds: tuple[int, ...] = (1,)
    profile: str = "sobolev"
    n_x: int = 256
    T: float = 1.0
    methods: tuple[str, ...] = ("lri3",)
    k_min: int = 2
    k_max: int = 8
    fit_window: Optional[tuple[int, int]] = None
    reference: str = "rk4ref"
    k_ref: int = 14
    dealias: bool = False
    n_x_list: tuple[int, ...] = (32, 64, 128, 256, 512)
    n_x_ref: int = 2048
    h_spatial: float = 1e-5
    target_err: float = 1e-6
    threads: int = 1

    def __post_init__(self):
        self.thetas = tuple(float(t) for t in np.atleast_1d(self.thetas))
        self.seeds = tuple(int(s) for s in np.atleast_1d(self.seeds))
        self.methods = tuple(self.methods)
        self.n_x_list = tuple(int(n) for n in self.n_x_list)
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.reference not in ("rk4ref", "fine-lri3"):
            raise ValueError(f"reference must be 'rk4ref' or 'fine-lri3', got {self.reference!r}")
        if not self.k_max > self.k_min:
            raise ValueError("stepsize ladder must be strictly decreasing (k_max > k_min)")
        if self.k_ref < self.k_max + 5:
            raise ValueError("reference stepsize must be <= smallest h / 32 (k_ref >= k_max + 5)")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def ks(self) -> list[int]:
        return list(range(self.k_min, self.k_max + 1))

    @property
    def window(self) -> tuple[int, int]:
        if self.fit_window is not None:
            return tuple(self.fit_window)
        # asymptotic window: drop the two coarsest stepsizes
        return (min(self.k_min + 2, self.k_max - 2), self.k_max)

    @property
    def h_ref(self) -> float:
        return 2.0 ** (-self.k_ref)

    def grid(self, n_x: Optional[int] = None) -> TorusGrid:
        return TorusGrid(self.d, n_x or self.n_x, self.a, self.b)

    def problem(self, n_x: Optional[int] = None) -> Problem:
        return Problem(self.grid(n_x), catalogue(self.nonlinearity, self.lam), self.rho, self.dealias)

    def seeds_for(self, theta: float) -> tuple[int, ...]:
        return self.seeds[:1] if math.isinf(theta) else self.seeds

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["thetas"] = [_json_float(t) for t in self.thetas]
        return out


def _json_float(x):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


# --- report ----------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    kind: str
    spec: StudySpec
    rows: list[dict] = field(default_factory=list)
    fits: list[dict] = field(default_factory=list)
    references: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        return {
            "artifact": "kgtrig",
            "version": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "kind": self.kind,
            "spec": self.spec.to_dict(),
        }

    def slope(self, method: str = "lri3", theta: Optional[float] = None) -> float:
        """Seed-averaged fitted slope for ``method`` (and ``theta``)."""
        for fit in self.fits:
            if fit["method"] == method and fit["seed"] == "mean" and (theta is None or fit["theta"] == theta):
                return fit["slope"]
        raise KeyError((method, theta))

    def errors(self, method: str = "lri3", theta: Optional[float] = None, seed=None) -> list[float]:
        return [
            r["err"]
            for r in self.rows
            if r["method"] == method and (theta is None or r["theta"] == theta) and (seed is None or r["seed"] == seed)
        ]

    def aggregated_rows(self) -> list[dict]:
        """One row per (method, theta, k or n_x); err averaged over seeds."""
        groups: dict[tuple, list[dict]] = {}
        for r in self.rows:
            groups.setdefault((r["method"], r["theta"], r["n_x"], r["k"]), []).append(r)
        out = []
        for (method, theta, n_x, k), rs in groups.items():
            flags = sorted({f for r in rs for f in r["flags"]})
            out.append(
                {
                    "method": method,
                    "theta": theta,
                    "n_x": n_x,
                    "k": k,
                    "h": rs[0]["h"],
                    "err": float(np.mean([r["err"] for r in rs])),
                    "wall_ns": int(sum(r["wall_ns"] for r in rs)),
                    "flags": flags,
                }
            )
        return out

    def to_json(self, path) -> None:
        doc = {
            "metadata": self.metadata(),
            "rows": self.rows,
            "fits": self.fits,
            "references": self.references,
            "extra": self.extra,
        }
        Path(path).write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")

    def to_csv(self, path) -> None:
        cols = ["method", "theta", "n_x", "k", "h", "err", "wall_ns", "flags"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.aggregated_rows():
                w.writerow(
                    [
                        r["method"],
                        _json_float(r["theta"]),
                        r["n_x"],
                        "" if r["k"] is None else r["k"],
                        repr(r["h"]),
                        repr(r["err"]),
                        r["wall_ns"],
                        ";".join(r["flags"]),
                    ]
                )

    def write_plot_data(self, directory) -> list[Path]:
        """Whitespace tables, one per panel: x column then one y column per series."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        rows = self.aggregated_rows()
        written = []
        if self.kind == "spatial":
            panels = {"spatial": rows}
            xkey, series_key = "n_x", "theta"
        elif self.kind == "efficiency":
            panels = {f"efficiency_theta{_json_float(t)}": [r for r in rows if r["theta"] == t] for t in self.spec.thetas}
            xkey, series_key = None, "method"
        else:
            panels = {f"temporal_theta{_json_float(t)}": [r for r in rows if r["theta"] == t] for t in self.spec.thetas}
            xkey, series_key = "h", "method"
        for name, rs in panels.items():
            path = directory / f"{name}.dat"
            series = sorted({r[series_key] for r in rs}, key=str)
            with open(path, "w") as fh:
                if xkey is None:
                    # efficiency: (wall seconds, err) pairs per method
                    fh.write("# " + " ".join(f"wall_s[{s}] err[{s}]" for s in series) + "\n")
                    cols = [[(r["wall_ns"] * 1e-9, r["err"]) for r in rs if r["method"] == s] for s in series]
                    for i in range(max(len(c) for c in cols)):
                        fh.write(" ".join("%.6e %.6e" % c[i] if i < len(c) else "nan nan" for c in cols) + "\n")
                else:
                    xs = sorted({r[xkey] for r in rs}, reverse=(xkey == "h"))
                    fh.write(f"# {xkey} " + " ".join(f"err[{_json_float(s)}]" for s in series) + "\n")
                    for x in xs:
                        vals = []
                        for s in series:
                            hit = [r["err"] for r in rs if r[xkey] == x and r[series_key] == s]
                            vals.append("%.6e" % hit[0] if hit else "nan")
                        fh.write(f"{x!r} " + " ".join(vals) + "\n")
            written.append(path)
        return written


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


# --- study machinery --------------------------------------------------------------


def _initial_state(spec: StudySpec, theta: float, seed: int, grid: TorusGrid) -> State:
    data = rough_data(theta, seed, grid, spec.profile)
    return State(0.0, data.u0, data.v0)


def _reference(spec: StudySpec, state: State, problem: Problem, T: float, h: float) -> State:
    if spec.reference == "rk4ref":
        if h > rk4_stability_limit(problem):
            raise ValueError(f"reference stepsize {h} violates the RK4 stability bound")
        return evolve(state, T, "rk4", h, problem).final
    return evolve(state, T, "lri3", h, problem).final


def _timed_run(state, T, method, h, problem):
    t0 = time.perf_counter_ns()
    final = evolve(state, T, method, h, problem).final
    return final, time.perf_counter_ns() - t0


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _flag_series(rows: list[dict], floor: float):
    prev = None
    for r in sorted(rows, key=lambda r: r["h"], reverse=True):
        if r["err"] < floor:
            r["flags"].append("at_reference_floor")
        if prev is not None and r["err"] > prev:
            r["flags"].append("nonmonotone")
        prev = r["err"]


def _fit_rows(rows: list[dict], window, xkey="k"):
    pts = [(r[xkey], r["err"]) for r in rows if "at_reference_floor" not in r["flags"]]
    return fit_order(pts, window)


def _add_fits(report: ConvergenceReport, window, xkey="k", sign=1.0):
    spec = report.spec
    keys = sorted({(r["method"], r["theta"]) for r in report.rows}, key=str)
    for method, theta in keys:
        per_seed = []
        for seed in spec.seeds_for(theta):
            rs = [r for r in report.rows if r["method"] == method and r["theta"] == theta and r["seed"] == seed]
            if not rs:
                continue
            try:
                fr = _fit_rows(rs, window, xkey)
            except OrderFitError as exc:
                report.fits.append({"method": method, "theta": theta, "seed": seed, "slope": None, "error": str(exc)})
                continue
            entry = {
                "method": method,
                "theta": theta,
                "seed": seed,
                "slope": sign * fr.slope,
                "residual": fr.residual,
                "used": list(fr.used),
                "excluded": [list(e) for e in fr.excluded],
            }
            report.fits.append(entry)
            per_seed.append(entry)
        if per_seed:
            report.fits.append(
                {
                    "method": method,
                    "theta": theta,
                    "seed": "mean",
                    "slope": float(np.mean([e["slope"] for e in per_seed])),
                    "residual": float(np.mean([e["residual"] for e in per_seed])),
                    "n_seeds": len(per_seed),
                }
            )


def _time_ladder_study(spec: StudySpec, kind: str) -> ConvergenceReport:
    coarse = spec.T * 2.0**spec.k_min
    if abs(coarse - round(coarse)) > 1e-9 * max(1.0, coarse):
        raise ValueError(f"T = {spec.T} is not a multiple of the coarsest stepsize 2^-{spec.k_min}")
    report = ConvergenceReport(kind, spec)
    problem = spec.problem()
    grid = problem.grid
    for theta in spec.thetas:
        for seed in spec.seeds_for(theta):
            s0 = _initial_state(spec, theta, seed, grid)
            ref = _reference(spec, s0, problem, spec.T, spec.h_ref)
            ref_coarse = _reference(spec, s0, problem, spec.T, 2.0 * spec.h_ref)
            self_err = error_metric(ref_coarse, ref)
            report.references.append(
                {"theta": theta, "seed": seed, "mode": spec.reference, "h_ref": spec.h_ref, "self_error": self_err}
            )
            cells = [(m, k) for m in spec.methods for k in spec.ks]

            def run(cell, s0=s0, ref=ref):
                method, k = cell
                h = 2.0 ** (-k)
                final, wall = _timed_run(s0, spec.T, method, h, problem)
                ev = error_components(final, ref)
                return {
                    "method": method,
                    "theta": theta,
                    "seed": seed,
                    "n_x": grid.n_x,
                    "k": k,
                    "h": h,
                    "steps": int(round(spec.T / h)),
                    "err": ev.err,
                    "err_u": ev.u_part,
                    "err_v": ev.v_part,
                    "wall_ns": int(wall),
                    "flags": list(ev.flags),
                }

            rows = _map(run, cells, spec.threads)
            for method in spec.methods:
                _flag_series([r for r in rows if r["method"] == method], FLOOR_FACTOR * self_err)
            report.rows.extend(rows)
    _add_fits(report, spec.window)
    return report


def temporal_study(spec: StudySpec) -> ConvergenceReport:
    """Error at T against h = 2^-k for every method, theta and seed."""
    return _time_ladder_study(spec, "temporal")


def efficiency_study(spec: StudySpec) -> ConvergenceReport:
    """(wall time, error) pairs; methods ranked by time to reach ``target_err``."""
    report = _time_ladder_study(spec, "efficiency")
    ranking = []
    for theta in spec.thetas:
        for method in spec.methods:
            rows = [r for r in report.aggregated_rows() if r["method"] == method and r["theta"] == theta]
            hits = [r for r in rows if r["err"] <= spec.target_err]
            best = min(hits, key=lambda r: r["wall_ns"]) if hits else None
            ranking.append(
                {
                    "theta": theta,
                    "method": method,
                    "reached": best is not None,
                    "wall_ns": best["wall_ns"] if best else None,
                    "steps": int(round(spec.T / best["h"])) if best else None,
                    "k": best["k"] if best else None,
                }
            )
    ranking.sort(key=lambda e: (str(e["theta"]), not e["reached"], e["wall_ns"] or 0))
    report.extra["target_err"] = spec.target_err
    report.extra["ranking"] = ranking
    return report


def spatial_study(spec: StudySpec, method: str = "lri3") -> ConvergenceReport:
    """Error against n_x at fixed tiny h, compared on the coarse modes of a fine run.

    The reference is the same scheme on ``n_x_ref`` points; each coarse result is
    compared with the reference projected onto its modes.  One halving probe on
    the finest coarse grid estimates the temporal error.
    """
    report = ConvergenceReport("spatial", spec)
    h, T = spec.h_spatial, spec.T
    probe_steps = T / (2.0 * h)
    if abs(probe_steps - round(probe_steps)) > 1e-9 * max(1.0, probe_steps):
        raise ValueError(f"T = {T} must be a multiple of 2 h_spatial = {2.0 * h} (halving probe)")
    ref_problem = spec.problem(spec.n_x_ref)
    for theta in spec.thetas:
        for seed in spec.seeds_for(theta):
            s_ref0 = _initial_state(spec, theta, seed, ref_problem.grid)
            ref = evolve(s_ref0, T, method, h, ref_problem).final

            def run(n_x, seed=seed, theta=theta, ref=ref):
                problem = spec.problem(n_x)
                s0 = _initial_state(spec, theta, seed, problem.grid)
                final, wall = _timed_run(s0, T, method, h, problem)
                target = State(ref.t, project(ref.u, problem.grid), project(ref.v, problem.grid))
                ev = error_components(final, target)
                return final, {
                    "method": method,
                    "theta": theta,
                    "seed": seed,
                    "n_x": n_x,
                    "k": None,
                    "h": h,
                    "err": ev.err,
                    "err_u": ev.u_part,
                    "err_v": ev.v_part,
                    "wall_ns": int(wall),
                    "flags": list(ev.flags),
                }

            results = _map(run, spec.n_x_list, spec.threads)
            rows = [r for _, r in results]
            # halving probe: same finest coarse grid at 2h
            n_probe = max(spec.n_x_list)
            finest = results[spec.n_x_list.index(n_probe)][0]
            probe_problem = spec.problem(n_probe)
            probe = evolve(_initial_state(spec, theta, seed, probe_problem.grid), T, method, 2.0 * h, probe_problem).final
            probe_err = error_metric(probe, finest)
            spatial_min = min(r["err"] for r in rows)
            negligible = probe_err < 0.1 * spatial_min
            prev = None
            for r in sorted(rows, key=lambda r: r["n_x"]):
                if prev is not None and not r["err"] < prev:
                    r["flags"].append("nonmonotone")
                if not negligible:
                    r["flags"].append("temporal_error_not_negligible")
                prev = r["err"]
            report.references.append(
                {"theta": theta, "seed": seed, "n_x_ref": spec.n_x_ref, "h": h, "halving_probe": probe_err}
            )
            report.rows.extend(rows)
    # slope of log2 err against log2 n_x (negative for convergence)
    for r in report.rows:
        r["log2_n_x"] = math.log2(r["n_x"])
    _add_fits(report, None, xkey="log2_n_x", sign=-1.0)
    return report


# --- single-run probes ---------------------------------------------------------------


def one_step_defects(
    state: State,
    problem: Problem,
    hs: Sequence[float],
    method: str = "lri3",
    substeps: int = 64,
) -> list[float]:
    """Local error of one step of ``method`` for each h, against RK4 with h/substeps."""
    out = []
    for h in hs:
        one = get_stepper(method, h, problem).step(state)
        ref = evolve(state, state.t + h, "rk4", h / substeps, problem).final
        out.append(error_metric(one, ref))
    return out


def energy_drift(
    state: State,
    problem: Problem,
    ks: Sequence[int],
    T: float = 1.0,
    method: str = "lri3",
) -> list[tuple[int, float]]:
    """Relative energy change ``|E(T) - E(0)| / |E(0)|`` for h = 2^-k."""
    e0 = energy(state, problem)
    out = []
    for k in ks:
        final = evolve(state, state.t + T, method, 2.0 ** (-k), problem).final
        out.append((k, abs(energy(final, problem) - e0) / abs(e0)))
    return out
