"""Command-line entry point: ``kgtrig {run,converge,spatial,efficiency,selftest}``.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure (blow-up,
I/O), 3 selftest failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from typing import Optional, Sequence

from . import __version__
from .config import ENV_PREFIX, ConfigError, RunConfig, parse_config
from .harness import efficiency_study, spatial_study, temporal_study
from .integrators import BlowUpError, MissingAntiderivativeError, State, energy, evolve
from .problems import rough_data
from .selftest import FAIL, format_table, run_selftest
from .spectral import coeff_sobolev_norm
from .statefile import write_state

log = logging.getLogger("kgtrig")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_SELFTEST = 0, 1, 2, 3


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--threads", type=int, metavar="N", help="worker threads for the study grid")
    common.add_argument("--seed", type=int, metavar="N", help="first data seed")
    common.add_argument("--quiet", action="store_true", help="only report errors")

    parser = argparse.ArgumentParser(
        prog="kgtrig",
        description="Klein-Gordon low-regularity integrator experiments.",
        epilog=f"Config values can also be set with {ENV_PREFIX}<SECTION>_<KEY> environment variables.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single evolution; writes state file and summary")
    sub.add_parser("converge", parents=[common], help="temporal convergence study")
    sub.add_parser("spatial", parents=[common], help="spatial convergence study")
    sub.add_parser("efficiency", parents=[common], help="error against wall time")
    st = sub.add_parser("selftest", help="fast invariant checks")
    st.add_argument("--quiet", action="store_true")
    st.add_argument("--corrupt-threshold", action="append", default=[], help=argparse.SUPPRESS)
    return parser


def _load(args) -> RunConfig:
    overrides = list(args.overrides)
    if args.out is not None:
        overrides.append(f"output.dir={args.out}")
    if args.seed is not None:
        overrides.append(f"data.seed={args.seed}")
    cfg = parse_config(args.config, overrides)
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        cfg.threads = args.threads
        cfg.spec.threads = args.threads
    cfg.verbosity = 0 if args.quiet else 1
    return cfg


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def cmd_run(cfg: RunConfig) -> int:
    cfg.check_run_step()
    spec = cfg.spec
    problem = spec.problem()
    theta = spec.thetas[0]
    seed = spec.seeds[0]
    data = rough_data(theta, seed, problem.grid, spec.profile)
    s0 = State(0.0, data.u0, data.v0)
    diagnostics = list(cfg.diagnostics)
    notes = []
    if "energy" in diagnostics and problem.nonlinearity.antiderivative is None:
        diagnostics.remove("energy")
        notes.append("energy diagnostic skipped: nonlinearity has no antiderivative")
    t0 = time.perf_counter()
    traj = evolve(s0, spec.T, cfg.method, cfg.h, problem, cfg.sample_every or None, diagnostics)
    wall = time.perf_counter() - t0
    final = traj.final
    summary = {
        "version": __version__,
        "config": cfg.resolved,
        "method": cfg.method,
        "h": cfg.h,
        "steps": int(round(spec.T / cfg.h)),
        "theta": _json_safe(theta),
        "seed": seed,
        "t_final": final.t,
        "wall_seconds": wall,
        "norms": {
            "h1_u": coeff_sobolev_norm(final.grid, final.u.coeffs, 1.0),
            "l2_v": coeff_sobolev_norm(final.grid, final.v.coeffs, 0.0),
            "h1_u0": coeff_sobolev_norm(s0.grid, s0.u.coeffs, 1.0),
            "l2_v0": coeff_sobolev_norm(s0.grid, s0.v.coeffs, 0.0),
        },
        "times": traj.times,
        "diagnostics": traj.diagnostics,
        "notes": notes,
    }
    try:
        summary["energy"] = {"initial": energy(s0, problem), "final": energy(final, problem)}
    except MissingAntiderivativeError:
        summary["energy"] = None
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_state(out / "state.kgs", final, problem.rho)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for note in notes:
        log.warning(note)
    log.info("run: %d steps of %s in %.2fs -> %s", summary["steps"], cfg.method, wall, out)
    return EXIT_OK


def _write_report(cfg: RunConfig, report, stem: str) -> None:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    report.extra["config"] = cfg.resolved
    report.to_json(out / f"{stem}.json")
    report.to_csv(out / f"{stem}.csv")
    if cfg.plot_data:
        report.write_plot_data(out / "plot_data")
    for fit in report.fits:
        if fit["seed"] == "mean":
            log.info("%s theta=%s slope %.3f", fit["method"], fit["theta"], fit["slope"])
    log.info("wrote %s/%s.{json,csv}", out, stem)


def cmd_converge(cfg: RunConfig) -> int:
    _write_report(cfg, temporal_study(cfg.spec), "converge")
    return EXIT_OK


def cmd_spatial(cfg: RunConfig) -> int:
    _write_report(cfg, spatial_study(cfg.spec, cfg.method), "spatial")
    return EXIT_OK


def cmd_efficiency(cfg: RunConfig) -> int:
    report = efficiency_study(cfg.spec)
    _write_report(cfg, report, "efficiency")
    for entry in report.extra["ranking"]:
        log.info(
            "theta=%s %-9s %s",
            entry["theta"],
            entry["method"],
            f"{entry['wall_ns'] * 1e-9:.3f}s" if entry["reached"] else "target not reached",
        )
    return EXIT_OK


def cmd_selftest(quiet: bool = False, corrupt: Sequence[str] = ()) -> int:
    thresholds = {}
    for item in corrupt:
        name, _, value = item.partition("=")
        thresholds[name] = float(value)
    t0 = time.perf_counter()
    results = run_selftest(thresholds=thresholds)
    total = time.perf_counter() - t0
    failed = any(r.status == FAIL for r in results)
    if not quiet or failed:
        print(format_table(results))
        print(f"selftest {'FAILED' if failed else 'passed'} in {total:.1f}s")
    return EXIT_SELFTEST if failed else EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "converge": cmd_converge,
    "spatial": cmd_spatial,
    "efficiency": cmd_efficiency,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage errors are code 1 here
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s: %(message)s",
        force=True,
    )
    if args.command == "selftest":
        return cmd_selftest(args.quiet, args.corrupt_threshold)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"runtime error during {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
