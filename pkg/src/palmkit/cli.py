"""Command-line interface, run configuration and point-pattern files."""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import GeometryError, PointPattern, Window
from .inference import FAMILIES, FitError, PalmFitProblem, fit_palm
from .models import (CovarianceModel, GaussianDppKernel, LgcpModel, LinearField, MaternClusterKernel,
                     ModelError, PoissonModel, SncpModel, StraussModel, ThomasKernel)
from .palm import PalmError, palm_model
from .rng import RngStream, replicate_map
from .simulate import DEFAULT_RESOLUTION, STRAUSS_BURN_IN, simulate
from .summaries import SummaryError, estimate_G, estimate_K, estimate_K_inhom, average_curves, r_grid

COMMANDS = ("simulate", "summarize", "fit", "verify", "palm")
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- configuration

def _num(key: str, text: str, *, positive=False, nonneg=False) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    if math.isnan(v) or (positive and not v > 0) or (nonneg and not v >= 0):
        bound = "positive" if positive else "nonnegative"
        raise ConfigError(f"{key}: must be {bound}, got {text!r}")
    return v


def _pair(key: str, text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected two comma-separated numbers, got {text!r}")
    return _num(key, parts[0]), _num(key, parts[1])


def parse_points(text: str, key: str = "palm_at") -> np.ndarray:
    """``"x,y;x2,y2"`` or ``"x,y,x2,y2"`` to an (n, 2) array."""
    vals = [v for v in text.replace(";", ",").split(",") if v.strip()]
    if not vals or len(vals) % 2:
        raise ConfigError(f"{key}: expected an even number of coordinates, got {text!r}")
    return np.array([_num(key, v) for v in vals]).reshape(-1, 2)


def _fmt(v: float) -> str:
    return repr(float(v))


def _fmt_points(pts) -> str:
    return ";".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)


# key -> (default or None if required, validator)
_MODEL_KEYS = {
    "poisson": {"rho": (None, "nonneg"), "slope": ("0.0,0.0", "pair")},
    "lgcp": {"mean": ("0.0", "num"), "slope": ("0.0,0.0", "pair"), "cov": ("exponential", "cov"),
             "sigma2": ("1.0", "positive"), "phi": ("0.2", "positive")},
    "strauss": {"theta1": ("0.0", "num"), "theta2": (None, "nonneg"), "R": (None, "positive")},
    "sncp": {"kappa": (None, "positive"), "gamma": (None, "positive"), "kernel": ("thomas", "kernel"),
             "scale": (None, "positive")},
    "dpp": {"family": ("gaussian", "dppfamily"), "rho": (None, "positive"), "alpha": (None, "positive")},
}
_RUN_KEYS = {"command", "seed", "reps", "window", "in", "out", "svg", "rmax", "bins", "stat", "R",
             "family", "init", "rho", "suite", "steps", "resolution"}
_CHOICES = {"cov": ("exponential", "gaussian"), "kernel": ("thomas", "matern"), "dppfamily": ("gaussian",),
            "stat": ("K", "Kinhom", "G"), "family": tuple(FAMILIES)}


def _canonical_value(key: str, text: str, kind: str) -> str:
    if kind in ("num", "nonneg", "positive"):
        return _fmt(_num(key, text, positive=kind == "positive", nonneg=kind == "nonneg"))
    if kind == "pair":
        return ",".join(map(_fmt, _pair(key, text)))
    if text not in _CHOICES[kind]:
        raise ConfigError(f"{key}: expected one of {', '.join(_CHOICES[kind])}, got {text!r}")
    return text


def validate_model(raw: dict[str, str]) -> dict[str, str]:
    """Check keys and values of a ``[model]`` section and fill defaults."""
    kind = raw.get("kind")
    if kind not in _MODEL_KEYS:
        raise ConfigError(f"kind: expected one of {', '.join(_MODEL_KEYS)}, got {kind!r}")
    spec = _MODEL_KEYS[kind]
    out = {"kind": kind}
    for key in raw:
        if key not in spec and key not in ("kind", "palm_at"):
            raise ConfigError(f"{key}: unknown key for kind={kind}")
    for key, (default, check) in spec.items():
        if key not in raw and default is None:
            raise ConfigError(f"{key}: required for kind={kind}")
        out[key] = _canonical_value(key, raw.get(key, default), check)
    if "palm_at" in raw:
        pts = parse_points(raw["palm_at"])
        order = np.lexsort(pts.T[::-1])
        out["palm_at"] = _fmt_points(pts[order])
    return out


@dataclass
class RunConfig:
    command: str = "simulate"
    model: dict[str, str] = field(default_factory=dict)
    window: Window = field(default_factory=Window.unit)
    seed: int | None = None
    reps: int = 1
    paths: dict[str, str] = field(default_factory=dict)
    options: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command: expected one of {', '.join(COMMANDS)}, got {self.command!r}")
        if self.reps < 1:
            raise ConfigError("reps: must be at least 1")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must be a 64-bit unsigned integer")


def _sections(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            if current not in ("run", "model"):
                raise ConfigError(f"line {lineno}: unknown section [{current}]")
            if current in sections:
                raise ConfigError(f"line {lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if current is None:
            raise ConfigError(f"line {lineno}: key outside of a section")
        if "=" not in s:
            raise ConfigError(f"line {lineno}: expected key=value, got {s!r}")
        key, value = (t.strip() for t in s.split("=", 1))
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        sections[current][key] = (value, lineno)
    return sections


def parse_config(text: str) -> RunConfig:
    """Strict INI parsing of ``[run]`` and ``[model]`` sections into a :class:`RunConfig`."""
    sections = _sections(text)
    run = sections.get("run", {})
    model = sections.get("model", {})

    def where(table, key):
        return f"line {table[key][1]}: " if key in table else ""

    for key in run:
        if key not in _RUN_KEYS:
            raise ConfigError(f"{where(run, key)}{key}: unknown key in [run]")
    try:
        vmodel = validate_model({k: v for k, (v, _) in model.items()}) if model else {}
    except ConfigError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigError(f"{where(model, key) or where(model, 'kind')}{exc}") from None
    values = {k: v for k, (v, _) in run.items()}
    try:
        window = Window.parse(values.pop("window")) if "window" in values else Window.unit()
    except GeometryError as exc:
        raise ConfigError(f"{where(run, 'window')}window: {exc}") from None
    ints = {}
    for key in ("seed", "reps"):
        if key in values:
            try:
                ints[key] = int(values.pop(key))
            except ValueError:
                raise ConfigError(f"{where(run, key)}{key}: expected an integer") from None
    command = values.pop("command", "simulate")
    paths = {k: values.pop(k) for k in ("in", "out", "svg") if k in values}
    try:
        return RunConfig(command, vmodel, window, ints.get("seed"), ints.get("reps", 1), paths, values)
    except ConfigError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigError(f"{where(run, key)}{exc}") from None


def emit_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config`."""
    lines = ["[run]", f"command = {cfg.command}", f"window = {','.join(map(_fmt, cfg.window.bounds))}",
             f"reps = {cfg.reps}"]
    if cfg.seed is not None:
        lines.append(f"seed = {cfg.seed}")
    lines += [f"{k} = {v}" for k, v in {**cfg.paths, **cfg.options}.items()]
    if cfg.model:
        lines += ["", "[model]"] + [f"{k} = {v}" for k, v in cfg.model.items()]
    return "\n".join(lines) + "\n"


def read_model_config(path) -> dict[str, str]:
    cfg = parse_config(Path(path).read_text(encoding="utf-8"))
    if not cfg.model:
        raise ConfigError(f"{path}: no [model] section")
    return cfg.model


def write_model_config(model: dict[str, str], path) -> None:
    Path(path).write_text("[model]\n" + "".join(f"{k} = {v}\n" for k, v in model.items()), encoding="utf-8")


def build_model(model: dict[str, str], window: Window):
    """Model object for a validated ``[model]`` map; ``palm_at`` yields the realised Palm model."""
    kind = model["kind"]
    f = {k: float(v) for k, v in model.items() if k in ("rho", "mean", "sigma2", "phi", "theta1", "theta2",
                                                          "R", "kappa", "gamma", "scale", "alpha")}
    if kind == "poisson":
        m = PoissonModel(LinearField(f["rho"], _pair("slope", model["slope"])))
    elif kind == "lgcp":
        m = LgcpModel(LinearField(f["mean"], _pair("slope", model["slope"])),
                      CovarianceModel(model["cov"], f["sigma2"], f["phi"]))
    elif kind == "strauss":
        m = StraussModel(f["theta1"], f["theta2"], f["R"], window)
    elif kind == "sncp":
        kernel = ThomasKernel(f["scale"]) if model["kernel"] == "thomas" else MaternClusterKernel(f["scale"])
        m = SncpModel(f["kappa"], f["gamma"], kernel)
    else:
        m = GaussianDppKernel(f["rho"], f["alpha"], window)
    if "palm_at" in model:
        m = palm_model(m, parse_points(model["palm_at"])).realized
    return m


# ---------------------------------------------------------------- pattern files

def read_pattern(path, window: Window) -> PointPattern:
    """Read a CSV with header ``x,y``; malformed rows are reported by line number."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["x", "y"]:
        raise ConfigError(f"{path}: first line must be the header 'x,y'")
    pts = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ConfigError(f"{path}: line {lineno}: expected 2 fields, got {len(row)}")
        try:
            x, y = float(row[0]), float(row[1])
        except ValueError:
            raise ConfigError(f"{path}: line {lineno}: non-numeric coordinate") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ConfigError(f"{path}: line {lineno}: non-finite coordinate")
        if not window.contains(np.array([x, y])):
            raise ConfigError(f"{path}: line {lineno}: point ({x}, {y}) outside window {window}")
        pts.append((x, y))
    arr = np.array(pts, dtype=float).reshape(-1, 2)
    if len(arr):
        _, first, counts = np.unique(arr, axis=0, return_index=True, return_counts=True)
        if np.any(counts > 1):
            dup = int(np.sort(first[counts > 1])[0]) + 2
            raise ConfigError(f"{path}: line {dup}: duplicate point")
    return PointPattern(arr, window)


def write_pattern(x: PointPattern, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("x,y\n")
        for a, b in x.points:
            fh.write(f"{a:.17g},{b:.17g}\n")


def _g17(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def write_curve(c, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("r,estimate,se,theoretical\n")
        for i, r in enumerate(c.r):
            se = None if c.se is None else float(c.se[i])
            th = None if c.theoretical is None else float(c.theoretical[i])
            fh.write(",".join(_g17(v) for v in (float(r), float(c.estimate[i]), se, th)) + "\n")


def write_reports(reports, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("name,lhs,rhs,se,z,pass,reps,seed\n")
        for r in reports:
            fh.write(",".join([r.name, _g17(r.lhs), _g17(r.rhs), _g17(r.se_combined), _g17(r.z),
                               "true" if r.passed else "false", str(r.n_reps), str(r.seed)]) + "\n")


# ---------------------------------------------------------------- commands

def _window(text):
    try:
        return Window.parse(text)
    except GeometryError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def cmd_simulate(args) -> int:
    model = build_model(read_model_config(args.model), args.window)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = (args.resolution, args.resolution)
    patterns = replicate_map(lambda g: simulate(model, args.window, g, resolution=res, steps=args.steps),
                             args.reps, RngStream(args.seed))
    width = max(4, len(str(args.reps)))
    for i, x in enumerate(patterns, 1):
        write_pattern(x, out / f"pattern_{i:0{width}d}.csv")
    return EXIT_OK


def cmd_summarize(args) -> int:
    patterns = [read_pattern(p, args.window) for p in args.inputs]
    r = r_grid(args.rmax, args.bins)
    curves = []
    for x in patterns:
        if args.stat == "K":
            curves.append(estimate_K(x, r))
        elif args.stat == "G":
            curves.append(estimate_G(x, r))
        else:
            rho = args.rho if args.rho is not None else x.intensity
            curves.append(estimate_K_inhom(x, rho, r))
    curve = curves[0] if len(curves) == 1 else average_curves(curves)
    write_curve(curve, args.out)
    if args.svg:
        from .plotting import render_curve_svg
        render_curve_svg(curve, args.svg)
    return EXIT_OK


def cmd_fit(args) -> int:
    x = read_pattern(args.inputs, args.window)
    p = PalmFitProblem(x, args.R, args.rho, FAMILIES[args.family])
    init = _pair("init", args.init)
    res = fit_palm(p, init)
    rows = [(name, float(v)) for name, v in zip(p.family.params, res.theta)]
    rows += [("rho", float(p.rho)), ("loglik", res.loglik), ("converged", str(res.report.converged).lower()),
             ("iterations", res.report.iterations), ("evaluations", res.report.evaluations),
             ("simplex_spread", float(res.report.spread)),
             ("boundary_solution", str(res.report.boundary_solution).lower()),
             ("at_bound", ";".join(res.report.at_bound)), ("seed", args.seed)]
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("param,estimate\n")
        for name, v in rows:
            fh.write(f"{name},{_g17(v)}\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_suite
    reports = run_suite(args.suite, args.seed, args.reps, args.rhs_scale)
    write_reports(reports, args.out)
    if args.svg:
        from .plotting import render_report_svg
        render_report_svg(reports, args.svg)
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"verify: {len(failed)} of {len(reports)} checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_palm(args) -> int:
    model = read_model_config(args.model)
    pts = parse_points(args.at, "--at")
    if "palm_at" in model:
        pts = np.vstack([parse_points(model["palm_at"]), pts])
    merged = validate_model({**model, "palm_at": _fmt_points(pts)})
    build_model(merged, args.window)
    write_model_config(merged, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="palmkit", description="Palm distributions of spatial point processes")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_window(p):
        p.add_argument("--window", type=_window, default=Window.unit(), help="x0,y0,x1,y1 (default unit square)")

    p = sub.add_parser("simulate", help="simulate realisations of a model")
    p.add_argument("--model", required=True)
    add_window(p)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--reps", type=_positive_int, default=1)
    p.add_argument("--resolution", type=_positive_int, default=DEFAULT_RESOLUTION[0],
                   help="LGCP grid cells per side")
    p.add_argument("--steps", type=_positive_int, default=int(STRAUSS_BURN_IN), help="Strauss chain length")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(run=cmd_simulate)

    p = sub.add_parser("summarize", help="border-corrected K, Kinhom or G")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    add_window(p)
    p.add_argument("--stat", choices=("K", "Kinhom", "G"), default="K")
    p.add_argument("--rmax", type=float, default=0.25)
    p.add_argument("--bins", type=_positive_int, default=64)
    p.add_argument("--rho", type=float, help="constant intensity for Kinhom (default N/|W|)")
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.set_defaults(run=cmd_summarize)

    p = sub.add_parser("fit", help="Palm likelihood fit of a cluster model")
    p.add_argument("--in", dest="inputs", required=True)
    add_window(p)
    p.add_argument("--family", choices=tuple(FAMILIES), default="thomas")
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--rho", type=float)
    p.add_argument("--init", required=True, help="kappa,sigma")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_fit)

    p = sub.add_parser("verify", help="run identity checks")
    p.add_argument("--suite", choices=("default", "poisson", "lgcp", "gibbs", "sncp", "dpp"), default="default")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--reps", type=_positive_int)
    p.add_argument("--rhs-scale", type=float, default=1.0, help="multiply every right-hand side (power probe)")
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.set_defaults(run=cmd_verify)

    p = sub.add_parser("palm", help="write the reduced Palm model as a config")
    p.add_argument("--model", required=True)
    p.add_argument("--at", required=True, help="x,y[,x2,y2...]")
    add_window(p)
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_palm)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.run(args)
    except (ConfigError, GeometryError, ModelError, PalmError, FitError, SummaryError, FileNotFoundError) as exc:
        print(f"palmkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"palmkit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
