"""INI-style run configuration with strict validation.

Sections and keys (defaults in brackets)::

    [problem]  nonlinearity [sine]  lambda [1.0]  d [1]  rho [0.0]
               a [-pi]  b [pi]  dealias [false]
    [data]     theta [2.0]  seed [1]  n_seeds [4]  profile [sobolev]  n_x [256]
    [study]    T [1.0]  methods [lri3]  method [lri3]  h [2^-k_max]
               k_min [2]  k_max [8]  fit_k_min/fit_k_max [k_min+2 / k_max]
               reference [rk4ref]  k_ref [14]  n_x_list [32,64,128,256,512]
               n_x_ref [2048]  h_spatial [1e-5]  target_err [1e-6]
               sample_every [0]  diagnostics []
    [output]   dir [out]  plot_data [true]

``theta`` and the list keys take comma-separated values; ``theta = inf``
selects the smooth single-mode preset.  Overrides are applied in the order
file < environment (``KGTRIG_<SECTION>_<KEY>``) < ``--set section.key=value``.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .harness import StudySpec
from .integrators import DIAGNOSTICS, METHODS
from .problems import CATALOGUE_NAMES, PROFILES

ENV_PREFIX = "KGTRIG_"


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float(s: str) -> float:
    v = s.strip().lower()
    if v == "pi":
        return math.pi
    if v == "-pi":
        return -math.pi
    return float(v)


def _list(conv: Callable) -> Callable:
    return lambda s: tuple(conv(x) for x in s.split(",") if x.strip())


# key -> (converter, default as text; None means unset)
SCHEMA: dict[str, dict[str, tuple[Callable, Optional[str]]]] = {
    "problem": {
        "nonlinearity": (str.strip, "sine"),
        "lambda": (_float, "1.0"),
        "d": (int, "1"),
        "rho": (_float, "0.0"),
        "a": (_float, "-pi"),
        "b": (_float, "pi"),
        "dealias": (_bool, "false"),
    },
    "data": {
        "theta": (_list(_float), "2.0"),
        "seed": (int, "1"),
        "n_seeds": (int, "4"),
        "profile": (str.strip, "sobolev"),
        "n_x": (int, "256"),
    },
    "study": {
        "t": (_float, "1.0"),
        "methods": (_list(str.strip), "lri3"),
        "method": (str.strip, "lri3"),
        "h": (_float, None),
        "k_min": (int, "2"),
        "k_max": (int, "8"),
        "fit_k_min": (int, None),
        "fit_k_max": (int, None),
        "reference": (str.strip, "rk4ref"),
        "k_ref": (int, "14"),
        "n_x_list": (_list(int), "32,64,128,256,512"),
        "n_x_ref": (int, "2048"),
        "h_spatial": (_float, "1e-5"),
        "target_err": (_float, "1e-6"),
        "sample_every": (int, "0"),
        "diagnostics": (_list(str.strip), ""),
    },
    "output": {
        "dir": (str.strip, "out"),
        "plot_data": (_bool, "true"),
    },
}


@dataclass
class RunConfig:
    spec: StudySpec
    method: str
    h: float
    out_dir: Path
    plot_data: bool = True
    sample_every: int = 0
    diagnostics: tuple[str, ...] = ()
    verbosity: int = 1
    threads: int = 1
    resolved: dict = field(default_factory=dict)

    def check_run_step(self) -> None:
        """The single-run stepsize must divide T (checked only for ``run``)."""
        steps = self.spec.T / self.h
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"study.h: T = {self.spec.T} must be an integer multiple of h = {self.h}")


def _is_pow2(n: int) -> bool:
    return n >= 4 and (n & (n - 1)) == 0


def _read_file(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        parser.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: key outside any [section]") from exc
    except configparser.ParsingError as exc:
        lines = ", ".join(str(lineno) for lineno, _ in exc.errors)
        raise ConfigError(f"{path}: parse error at line(s) {lines}") from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: duplicate key {exc.option!r}") from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: duplicate section [{exc.section}]") from exc
    return {s: dict(parser.items(s)) for s in parser.sections()}


def _merge(raw: dict, section: str, key: str, value: str, origin: str):
    section = section.strip().lower()
    key = key.strip().lower()
    if section not in SCHEMA:
        raise ConfigError(f"{origin}: unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"{origin}: unknown key {section}.{key}")
    raw.setdefault(section, {})[key] = value


def parse_config(
    path: Optional[str] = None,
    overrides: Optional[list[str]] = None,
    env: Optional[dict] = None,
) -> RunConfig:
    """Build a validated RunConfig from a file, environment and ``section.key=value`` overrides."""
    raw: dict[str, dict[str, str]] = {}
    if path is not None:
        for section, items in _read_file(path).items():
            for key, value in items.items():
                _merge(raw, section, key, value, str(path))
    env = os.environ if env is None else env
    for name, value in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        section, _, key = rest.partition("_")
        _merge(raw, section, key, value, f"environment {name}")
    for item in overrides or []:
        lhs, eq, value = item.partition("=")
        section, dot, key = lhs.partition(".")
        if not eq or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        _merge(raw, section, key, value, f"--set {item}")

    vals: dict[str, dict] = {}
    for section, keys in SCHEMA.items():
        vals[section] = {}
        for key, (conv, default) in keys.items():
            text = raw.get(section, {}).get(key, default)
            if text is None:
                vals[section][key] = None
                continue
            try:
                vals[section][key] = conv(text)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: cannot parse {text!r} ({exc})") from exc
    return _validate(vals)


def _validate(vals: dict) -> RunConfig:
    p, dat, st, out = vals["problem"], vals["data"], vals["study"], vals["output"]

    def bad(key, constraint):
        raise ConfigError(f"{key}: {constraint}")

    if p["nonlinearity"] not in CATALOGUE_NAMES:
        bad("problem.nonlinearity", f"must be one of {', '.join(CATALOGUE_NAMES)}")
    if p["d"] not in (1, 2, 3):
        bad("problem.d", "must be 1, 2 or 3")
    if p["rho"] < 0:
        bad("problem.rho", "must be >= 0")
    if not p["b"] > p["a"]:
        bad("problem.b", "must exceed problem.a")
    if not _is_pow2(dat["n_x"]):
        bad("data.n_x", "n_x must be a power of two ≥ 4")
    if not dat["theta"]:
        bad("data.theta", "at least one value required")
    for th in dat["theta"]:
        if not th > 0.5:
            bad("data.theta", f"theta must satisfy θ > 1/2 (got {th})")
    if dat["n_seeds"] < 1:
        bad("data.n_seeds", "must be >= 1")
    if dat["profile"] not in PROFILES:
        bad("data.profile", f"must be one of {', '.join(PROFILES)}")
    if not st["t"] > 0:
        bad("study.T", "T must be > 0")
    for m in st["methods"] + (st["method"],):
        if m not in METHODS:
            bad("study.methods", f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    if not st["k_max"] > st["k_min"]:
        bad("study.k_max", "must exceed study.k_min")
    if st["h"] is not None and not st["h"] > 0:
        bad("study.h", "h must be > 0")
    if not st["h_spatial"] > 0:
        bad("study.h_spatial", "h must be > 0")
    for n in st["n_x_list"] + (st["n_x_ref"],):
        if not _is_pow2(n):
            bad("study.n_x_list", "n_x must be a power of two ≥ 4")
    if st["reference"] not in ("rk4ref", "fine-lri3"):
        bad("study.reference", "must be rk4ref or fine-lri3")
    for name in st["diagnostics"]:
        if name not in DIAGNOSTICS:
            bad("study.diagnostics", f"unknown diagnostic {name!r}")

    window = None
    if st["fit_k_min"] is not None or st["fit_k_max"] is not None:
        window = (
            st["fit_k_min"] if st["fit_k_min"] is not None else st["k_min"],
            st["fit_k_max"] if st["fit_k_max"] is not None else st["k_max"],
        )
    seeds = tuple(range(dat["seed"], dat["seed"] + dat["n_seeds"]))
    try:
        spec = StudySpec(
            nonlinearity=p["nonlinearity"],
            lam=p["lambda"],
            d=p["d"],
            rho=p["rho"],
            a=p["a"],
            b=p["b"],
            dealias=p["dealias"],
            thetas=dat["theta"],
            seeds=seeds,
            profile=dat["profile"],
            n_x=dat["n_x"],
            T=st["t"],
            methods=st["methods"],
            k_min=st["k_min"],
            k_max=st["k_max"],
            fit_window=window,
            reference=st["reference"],
            k_ref=st["k_ref"],
            n_x_list=st["n_x_list"],
            n_x_ref=st["n_x_ref"],
            h_spatial=st["h_spatial"],
            target_err=st["target_err"],
        )
    except ValueError as exc:
        raise ConfigError(f"study: {exc}") from exc
    h = st["h"] if st["h"] is not None else 2.0 ** (-st["k_max"])
    resolved = {s: {k: _plain(v) for k, v in d.items()} for s, d in vals.items()}
    return RunConfig(
        spec=spec,
        method=st["method"],
        h=h,
        out_dir=Path(out["dir"]),
        plot_data=out["plot_data"],
        sample_every=st["sample_every"],
        diagnostics=st["diagnostics"],
        resolved=resolved,
    )


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v
