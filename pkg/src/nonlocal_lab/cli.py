"""Command-line entry point: ``nonlocal-lab <subcommand> ...``.

Exit codes: 0 on success, 1 when a gated inequality fails, 2 on input errors.
Every subcommand given ``--output`` writes its CSV/JSON artifacts there
together with ``manifest.json`` (config echo, tool version, tolerances).
"""

from __future__ import annotations

import argparse
import ast
import configparser
import csv
import inspect
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import oscillation_decay, quotient
from .core import Domain, GaussianBump, Grid, PowerProfile
from .experiments import EXPERIMENTS, ExperimentSpec, run_experiments
from .operators import EllipticityBounds, KernelSpec, RoughDensity, eval_directional, eval_linear, find_beta_roots
from .operators import power_constants_estimate
from .solver import DirichletProblem, SolverConfig, SolverInputError, solve

__all__ = ["main", "load_config", "RunConfig", "ConfigError", "write_csv", "write_json"]

SUBCOMMANDS = (
    "constants",
    "eval-op",
    "solve",
    "exponent-fit",
    "verify-barriers",
    "counterexample-l0",
    "legendre",
    "flatten-check",
    "run",
)


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every offending key."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class VerificationFailed(RuntimeError):
    pass


# ---------------------------------------------------------------- serialization


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_cell(x) for x in v)
    return str(v)


def write_csv(path, rows: list, header: list | None = None) -> None:
    """RFC-4180 CSV (CRLF line ends) with a header; floats in shortest round-trip form."""
    if header is None:
        header = []
        for r in rows:
            header.extend(k for k in r if k not in header)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(r.get(k)) for k in header])


def _csv_text(rows: list, header: list | None = None) -> str:
    buf = io.StringIO()
    if header is None:
        header = []
        for r in rows:
            header.extend(k for k in r if k not in header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(r.get(k)) for k in header])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}".replace("-", "_").replace(".", "_")
        if isinstance(v, dict):
            out.update(_flatten(v, key + "_"))
        else:
            out[key] = _jsonable(v)
    return out


def write_json(path, obj: dict) -> None:
    """Flat JSON object; nested dicts are folded into snake_case keys, non-finite floats become null."""
    with open(path, "w") as fh:
        json.dump(_flatten(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


# ---------------------------------------------------------------- config schema


def _float(lo=-math.inf, hi=math.inf, open_=True):
    def parse(raw):
        v = float(raw)
        ok = (lo < v < hi) if open_ else (lo <= v <= hi)
        if not ok:
            br = "()" if open_ else "[]"
            raise ValueError(f"must lie in {br[0]}{lo}, {hi}{br[1]}")
        return v

    return parse


def _int(lo=None):
    def parse(raw):
        v = int(raw)
        if lo is not None and v < lo:
            raise ValueError(f"must be at least {lo}")
        return v

    return parse


def _choice(*opts):
    def parse(raw):
        if raw not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}")
        return raw

    return parse


def _floats(raw):
    return tuple(float(v) for v in raw.replace(",", " ").split())


def _text(raw):
    return raw


SCHEMA = {
    "run": {"output": _text, "workers": _int(1)},
    "experiment": {"id": _text, "kind": _choice(*EXPERIMENTS), "seed": _int(0)},
    "kernel": {
        "s": _float(0.0, 1.0),
        "class": _choice("star", "rough"),
        "measure": _choice("constant", "trig_polynomial", "smoothed_indicator", "tabulated", "ball_indicator"),
        "lam": _float(0.0),
        "Lam": _float(0.0),
        "value": _float(0.0),
        "coeffs": _floats,
        "table": _text,
        "axis": float,
        "width": _float(0.0, math.pi / 2, open_=False),
        "gamma": _float(0.0, 1.0),
        "radius": _float(0.0),
    },
    "domain": {"kind": _choice("interval", "box", "ball", "half_space_truncation"), "center": _floats, "radius": _floats},
    "grid": {"h": _float(0.0, 1.0), "pad": _int(1)},
    "solver": {
        "scheme": _choice("standard", "singular"),
        "method": _choice("direct", "jacobi"),
        "tol": _float(0.0),
        "max_iter": _int(1),
        "rhs": float,
        "exterior": float,
    },
    "params": None,  # checked against the experiment runner's signature
    "tolerances": None,
}

# names of runner keywords that are tolerances rather than inputs
_TOLERANCE_KEYS = {"tol", "gap_min", "margin", "r2_min", "holder_slack"}


@dataclass
class RunConfig:
    """Parsed invocation: subcommand, config path, output directory, overrides."""

    subcommand: str
    config_path: str | None = None
    output: str | None = None
    overrides: dict = field(default_factory=dict)
    workers: int | None = None
    sections: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError([f"subcommand: unknown value {self.subcommand!r}"])


def _literal(raw: str):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def _check_param(name, value, default, problems, where):
    if name in ("s",) and not (isinstance(value, (int, float)) and 0 < value < 1):
        problems.append(f"{where}.{name}: must lie in (0, 1)")
        return value
    if name == "s_values":
        vals = value if isinstance(value, (list, tuple)) else [value]
        if not all(isinstance(v, (int, float)) and 0 < v < 1 for v in vals):
            problems.append(f"{where}.{name}: every entry must lie in (0, 1)")
        return tuple(vals)
    if default is inspect.Parameter.empty or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{where}.{name}: expected true/false")
        return value
    if isinstance(default, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where}.{name}: expected a number")
            return value
        return type(default)(value) if isinstance(default, float) else value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            problems.append(f"{where}.{name}: expected a sequence")
            return value
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def _parse_sections(cp: configparser.ConfigParser, base: Path | None):
    problems: list = []
    out: dict = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            problems.append(f"{sec}: unknown section")
            continue
        out[sec] = {}
        for key, raw in cp.items(sec, raw=True):
            parser = SCHEMA[sec]
            if parser is None:
                out[sec][key] = _literal(raw)
                continue
            if key not in parser:
                problems.append(f"{sec}.{key}: unknown key")
                continue
            try:
                out[sec][key] = parser[key](raw)
            except ValueError as exc:
                problems.append(f"{sec}.{key}: {exc}")
    kind = out.get("experiment", {}).get("kind")
    for sec in ("params", "tolerances"):
        if sec not in out:
            continue
        if kind is None:
            problems.append(f"{sec}: requires [experiment] kind")
            continue
        sig = inspect.signature(EXPERIMENTS[kind]).parameters
        for key in list(out[sec]):
            if key == "seed" or key not in sig:
                problems.append(f"{sec}.{key}: unknown key for experiment kind {kind!r}")
                continue
            if sec == "tolerances" and key not in _TOLERANCE_KEYS:
                problems.append(f"{sec}.{key}: not a tolerance")
                continue
            out[sec][key] = _check_param(key, out[sec][key], sig[key].default, problems, sec)
    k = out.get("kernel", {})
    if "lam" in k and "Lam" in k and k["lam"] > k["Lam"]:
        problems.append("kernel.Lam: must be at least kernel.lam")
    if "table" in k and base is not None and not os.path.isabs(k["table"]):
        k["table"] = str(base / k["table"])
    return out, problems


def _read_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (lam vs Lam)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError([f"{path}: malformed config ({exc.__class__.__name__}: {exc.message.splitlines()[0]})"]) from None
    return cp


def load_config(path, overrides: dict | None = None) -> tuple[RunConfig, ExperimentSpec | None]:
    """Parse a sectioned key-value config file.

    Sections mirror the modules (``kernel``, ``domain``, ``grid``,
    ``solver``) plus ``run``, ``experiment``, ``params`` and ``tolerances``.
    Unknown sections or keys and out-of-range values are all collected and
    reported together.  ``overrides`` maps ``"section.key"`` to raw strings.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = _read_config(p)
    problems = []
    for dotted, raw in (overrides or {}).items():
        if "." not in dotted:
            problems.append(f"{dotted}: override must be section.key")
            continue
        sec, key = dotted.split(".", 1)
        if sec not in SCHEMA:
            problems.append(f"{sec}: unknown section")
            continue
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, str(raw))
    sections, more = _parse_sections(cp, p.parent)
    problems += more
    if problems:
        raise ConfigError(problems)
    run = sections.get("run", {})
    spec = None
    if "experiment" in sections:
        ex = sections["experiment"]
        if "kind" not in ex:
            raise ConfigError(["experiment.kind: missing"])
        spec = ExperimentSpec(
            ex.get("id", ex["kind"]),
            ex["kind"],
            dict(sections.get("params", {})),
            dict(sections.get("tolerances", {})),
            run.get("output"),
            ex.get("seed", 0),
        )
    rc = RunConfig("run" if spec else "solve", str(p), run.get("output"), dict(overrides or {}), run.get("workers"), sections)
    rc.sections["_echo"] = {s: dict(cp.items(s, raw=True)) for s in cp.sections()}
    return rc, spec


# ---------------------------------------------------------------- builders


def _measure(k: dict, dim: int):
    from .spectral import SpectralMeasure, read_measure_table

    kind = k.get("measure", "constant")
    lam = k.get("lam", k.get("value", 1.0))
    Lam = k.get("Lam", lam)
    if kind == "constant":
        return SpectralMeasure.constant(k.get("value", lam), lam, Lam, dim)
    if kind == "trig_polynomial":
        return SpectralMeasure(kind, lam, Lam, {"coeffs": k.get("coeffs", (lam,))}, dim)
    if kind == "smoothed_indicator":
        prm = {key: k[key] for key in ("axis", "width", "gamma") if key in k}
        return SpectralMeasure(kind, lam, Lam, prm, dim)
    if kind == "tabulated":
        if "table" not in k:
            raise ConfigError(["kernel.table: required for tabulated measures"])
        ang, val = read_measure_table(k["table"])
        return SpectralMeasure(kind, lam, Lam, {"angles": ang, "values": val}, dim)
    raise ConfigError([f"kernel.measure: {kind!r} needs class = rough"])


def build_kernel(k: dict, dim: int) -> KernelSpec:
    if "s" not in k:
        raise ConfigError(["kernel.s: missing"])
    s = k["s"]
    if k.get("class", "star") == "rough":
        if k.get("measure") == "ball_indicator":
            b = RoughDensity.ball_indicator(k.get("lam", 1.0), k.get("Lam", 2.0), k.get("radius", 0.5), dim)
        else:
            b = RoughDensity.from_measure(_measure(k, dim))
        return KernelSpec("rough", s, b=b)
    return KernelSpec("star", s, _measure(k, dim))


def build_problem(sections: dict) -> tuple[DirichletProblem, SolverConfig]:
    missing = [f"{sec}: missing section" for sec in ("kernel", "domain", "grid") if sec not in sections]
    if missing:
        raise ConfigError(missing)
    d = sections["domain"]
    if "kind" not in d or "center" not in d or "radius" not in d:
        raise ConfigError([f"domain.{key}: missing" for key in ("kind", "center", "radius") if key not in d])
    D = Domain(d["kind"], d["center"], d["radius"])
    gs = sections["grid"]
    if "h" not in gs:
        raise ConfigError(["grid.h: missing"])
    h, pad = gs["h"], gs.get("pad", 4)
    lo, hi = D.bounds
    if D.kind == "half_space_truncation":
        lo = lo.copy()
        lo[-1] = 0.0
    G = Grid(tuple(lo - pad * h), tuple(hi + pad * h), h)
    L = build_kernel(sections["kernel"], D.n)
    sv = sections.get("solver", {})
    cfg = SolverConfig(method=sv.get("method", "direct"), scheme=sv.get("scheme", "standard"), tol=sv.get("tol", 1e-10), max_iter=sv.get("max_iter", 20000))
    return DirichletProblem(L, D, G, rhs=sv.get("rhs", -1.0), exterior=sv.get("exterior", 0.0)), cfg


# ---------------------------------------------------------------- subcommands


def _manifest(out: Path, args: argparse.Namespace, tolerances: dict, echo: dict | None = None, extra: dict | None = None):
    from ._parallel import worker_count

    m = {
        "tool": "nonlocal_lab",
        "version": __version__,
        "subcommand": args.command,
        "arguments": {k: _jsonable(v) for k, v in vars(args).items() if k not in ("command", "func")},
        "workers": worker_count(),
        "tolerances": tolerances,
        "config": echo or {},
    }
    m.update(extra or {})
    with open(out / "manifest.json", "w") as fh:
        json.dump(_jsonable(m), fh, indent=2)
        fh.write("\n")


def _outdir(args) -> Path | None:
    if not getattr(args, "output", None):
        return None
    p = Path(args.output)
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise ConfigError([f"output: directory {p} is not writable"])
    return p


def _emit(args, name: str, rows: list, tolerances: dict, header=None, echo=None) -> None:
    print(_csv_text(rows, header), end="")
    out = _outdir(args)
    if out is not None:
        write_csv(out / name, rows, header)
        _manifest(out, args, tolerances, echo)


def cmd_constants(args) -> int:
    beta = args.s if args.beta is None else args.beta
    bounds = EllipticityBounds(args.lam, args.Lam, args.s)
    hi, lo = power_constants_estimate(args.s, beta, bounds, args.cls, args.n)
    row = {"s": args.s, "beta": beta, "c_bar": hi.value, "c_bar_error": hi.error, "c_under": lo.value, "c_under_error": lo.error}
    if abs(beta - args.s) < 1e-15:
        row["zero_within_tol"] = abs(hi.value) <= args.tol and abs(lo.value) <= args.tol
    _emit(args, "constants.csv", [row], {"tol": args.tol})
    return 0 if row.get("zero_within_tol", True) else 1


def _field(spec: str, n: int):
    name, _, arg = spec.partition(":")
    if name == "power":
        e = np.zeros(n)
        e[-1] = 1.0
        return PowerProfile(tuple(e), float(arg or 0.5))
    if name == "bump":
        return GaussianBump(tuple(np.zeros(n)), float(arg or 0.3))
    raise ConfigError([f"field: unknown field {spec!r} (use power:BETA or bump:SIGMA)"])


def cmd_eval_op(args) -> int:
    x = _floats(args.x)
    k = {"s": args.s, "measure": args.measure, "lam": args.lam, "Lam": args.Lam}
    if args.coeffs:
        k["coeffs"] = _floats(args.coeffs)
    L = build_kernel(k, len(x))
    u = _field(args.field, len(x))
    rows = []
    a = eval_linear(L, u, x)
    rows.append({"route": "linear", "value": a.value, "error": a.error})
    b = eval_directional(L, u, x)
    rows.append({"route": "directional", "value": b.value, "error": b.error})
    agree = abs(a.value - b.value) <= a.error + b.error + 1e-12
    for r in rows:
        r["routes_agree"] = agree
    _emit(args, "eval_op.csv", rows, {})
    return 0 if agree else 1


def _solve_from(args):
    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    if getattr(args, "h", None) is not None:
        overrides["grid.h"] = str(args.h)
    rc, _ = load_config(args.config, overrides)
    p, cfg = build_problem(rc.sections)
    return rc, p, cfg, solve(p, cfg)


def cmd_solve(args) -> int:
    rc, p, cfg, rep = _solve_from(args)
    pts = p.grid.points()
    vals = rep.solution.values.ravel()
    names = [f"x{i + 1}" for i in range(p.grid.n)]
    rows = [dict(zip(names + ["value"], [*pt, v])) for pt, v in zip(pts, vals)]
    out = _outdir(args)
    report = {
        "iterations": rep.iterations,
        "residual": rep.residual,
        "converged": rep.converged,
        "method": rep.method,
        "fallback": rep.fallback,
        "message": rep.message,
        "scheme": cfg.scheme,
        "nodes": int(p.interior_mask().sum()),
    }
    if out is not None:
        write_csv(out / "solution.csv", rows, names + ["value"])
        write_json(out / "solve_report.json", report)
        _manifest(out, args, {"tol": cfg.tol}, rc.sections["_echo"])
    print(json.dumps(_flatten(report)))
    return 0 if rep.converged else 1


def cmd_exponent_fit(args) -> int:
    rc, p, cfg, rep = _solve_from(args)
    q = quotient(rep.solution, p.domain, p.s, band=args.band)
    z = _floats(args.anchor)
    fit = oscillation_decay(q, z, args.K, args.degree, ratio=args.ratio, h=p.grid.h)
    d = fit.as_dict()
    d["solver_residual"] = rep.residual
    rows = [{"r": r, "residual": v} for r, v in zip(fit.radii, fit.residuals)]
    out = _outdir(args)
    if out is not None:
        write_json(out / "exponent_fit.json", d)
        write_csv(out / "residuals.csv", rows, ["r", "residual"])
        _manifest(out, args, {"tol": cfg.tol}, rc.sections["_echo"])
    print(json.dumps(_flatten(d)))
    ok = fit.exact or (math.isfinite(fit.alpha) and fit.alpha > 0)
    return 0 if ok else 1


def cmd_verify_barriers(args) -> int:
    from .barriers import BarrierProfile, calibrate_subsolution, calibrate_supersolution, dyadic_sample, verify_barrier

    bounds = EllipticityBounds(args.lam, args.Lam, args.s)
    profiles = [BarrierProfile(k, args.s) for k in args.kind]
    if args.calibrated:
        profiles += [calibrate_supersolution(args.s, bounds), calibrate_subsolution(args.s, bounds)]
    rows, ok = [], True
    for b in profiles:
        rep = verify_barrier(b, bounds, dyadic_sample(b, args.count, args.seed), tol=args.tol)
        ok &= rep.passed
        for r in rep.rows:
            rows.append(
                {
                    "kind": b.kind,
                    "x1": r.point[0],
                    "x2": r.point[1] if len(r.point) > 1 else None,
                    "inequality": r.inequality,
                    "lhs": r.lhs,
                    "rhs": r.rhs,
                    "margin": r.margin,
                    "error": r.error,
                    "status": r.status,
                }
            )
    _emit(args, "barriers.csv", rows, {"tol": args.tol, "seed": args.seed})
    return 0 if ok else 1


def cmd_counterexample(args) -> int:
    from .experiments import run_counterexample_l0

    res = run_counterexample_l0(tuple(args.s), args.lam, args.Lam, equal_row=not args.no_equal_row, tol=args.tol)
    _emit(args, "counterexample_l0.csv", res.rows, {"tol": args.tol})
    if not res.passed:
        print("failed gates: " + ", ".join(res.failed_gates()), file=sys.stderr)
    return 0 if res.passed else 1


def cmd_legendre(args) -> int:
    from .extension import ExtensionMode, gram_matrix, theta

    modes = [ExtensionMode(k, args.s) for k in range(args.nmax + 1)]
    th = np.linspace(-math.pi, math.pi, args.points)
    header = ["theta"] + [f"nu{k}" for k in range(args.nmax + 1)]
    trows = [dict(zip(header, [t] + [float(theta(m, t)) for m in modes])) for t in th]
    G = gram_matrix(args.s, args.nmax)
    grows = [dict(zip(["j"] + [f"k{k}" for k in range(args.nmax + 1)], [j, *G[j]])) for j in range(args.nmax + 1)]
    off = float(np.max(np.abs(G - np.eye(args.nmax + 1))))
    out = _outdir(args)
    if out is not None:
        write_csv(out / "theta.csv", trows, header)
        write_csv(out / "gram.csv", grows)
        _manifest(out, args, {"tol": args.tol})
    print(_csv_text(grows), end="")
    print(f"max |G - I| = {off!r}")
    return 0 if off <= args.tol else 1


FLATTEN_PROBES = (
    ((0.0, 0.0), (1.0, 0.0)),
    ((0.0, 0.0), (1.0, 1.0)),
    ((0.0, 0.3), (0.3, 1.0)),
    ((0.3, 0.1), (1.0, 0.0)),
    ((0.3, 0.1), (1.0, -0.4)),
    ((-0.25, 0.2), (1.0, 1.0)),
    ((-0.25, 0.2), (0.3, 1.0)),
    ((0.1, -0.2), (1.0, 0.5)),
)


def flatten_rows(gamma=0.5, kappa=0.5, c=0.25, s=0.5, probes=FLATTEN_PROBES):
    from .flatten import TransformedKernel, decompose, parabola_diffeo
    from .spectral import SpectralMeasure

    k = TransformedKernel(SpectralMeasure.constant(1.0), parabola_diffeo(kappa, c, gamma), s)
    rows = []
    for x, th in probes:
        t = np.asarray(th, dtype=float)
        t = t / np.linalg.norm(t)
        p, m = decompose(k, x, t), decompose(k, x, -t)
        rows.append(
            {
                "x1": x[0],
                "x2": x[1],
                "theta1": t[0],
                "theta2": t[1],
                "a1": p.a1,
                "a2": p.a2,
                "slope": min(p.slope, m.slope),
                "a1_parity": abs(p.a1 - m.a1),
                "a2_parity": abs(p.a2 + m.a2),
            }
        )
    return rows


def cmd_flatten_check(args) -> int:
    rows = flatten_rows(args.gamma, args.kappa, args.c, args.s)
    ok = all(r["a1_parity"] <= args.tol and r["a2_parity"] <= args.tol and r["slope"] >= 1 + args.gamma - 0.1 for r in rows)
    _emit(args, "flatten_check.csv", rows, {"tol": args.tol, "slope_slack": 0.1})
    return 0 if ok else 1


def cmd_run(args) -> int:
    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    for kv in args.tol or []:
        k, _, v = kv.partition("=")
        overrides[f"tolerances.{k}"] = v
    if args.h is not None:
        overrides["params.h"] = str(args.h)
    loaded = [load_config(c, overrides) for c in args.config]
    specs = []
    for rc, spec in loaded:
        if spec is None:
            raise ConfigError([f"{rc.config_path}: experiment: missing section"])
        specs.append(spec)
    out = Path(args.output or loaded[0][0].output or "results")
    args.output = str(out)
    out = _outdir(args)
    workers = args.workers or loaded[0][0].workers
    results = run_experiments(specs, workers)
    ok = True
    summary = []
    for (rc, spec), res in zip(loaded, results):
        write_csv(out / f"{spec.id}.csv", res.rows)
        flat = {"id": res.id, "kind": res.kind, "passed": res.passed, "seed": res.seed, "elapsed": res.elapsed}
        flat.update({f"gate_{k}": v for k, v in res.gates.items()})
        flat.update(_flatten(res.reported, "reported_"))
        write_json(out / f"{spec.id}.json", flat)
        with open(out / f"{spec.id}.config.ini", "w") as fh:
            cp = configparser.ConfigParser(interpolation=None)
            cp.optionxform = str
            cp.read_dict(rc.sections["_echo"])
            cp.write(fh)
        ok &= res.passed
        summary.append(f"{spec.id}: {'PASS' if res.passed else 'FAIL'} ({res.elapsed:.1f} s)")
    tol = {s.id: s.tolerances for s in specs}
    _manifest(out, args, tol, {s.id: rc.sections["_echo"] for (rc, _), s in zip(loaded, specs)}, {"experiments": [s.id for s in specs]})
    print("\n".join(summary))
    return 0 if ok else 1


# ---------------------------------------------------------------- argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError([message])


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nonlocal-lab", description="Numerical checks for nonlocal elliptic operators.")
    p.add_argument("--version", action="version", version=f"nonlocal-lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, output=True):
        if output:
            sp.add_argument("--output", "-o", help="directory for CSV/JSON artifacts and the manifest")
        sp.add_argument("--workers", type=int, help="parallel workers (sets NONLOCAL_LAB_WORKERS)")

    def bounds(sp):
        sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
        sp.add_argument("--Lambda", dest="Lam", type=float, default=2.0)

    sp = sub.add_parser("constants", help="extremal constants of the power profile")
    sp.add_argument("--s", type=float, required=True)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--class", dest="cls", choices=("star", "rough"), default="star")
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--tol", type=float, default=1e-6)
    bounds(sp)
    common(sp)
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("eval-op", help="evaluate a stable operator by two routes")
    sp.add_argument("--s", type=float, required=True)
    sp.add_argument("--x", required=True, help="point, comma separated")
    sp.add_argument("--field", default="power:0.5", help="power:BETA or bump:SIGMA")
    sp.add_argument("--measure", choices=("constant", "trig_polynomial"), default="constant")
    sp.add_argument("--coeffs")
    bounds(sp)
    common(sp)
    sp.set_defaults(func=cmd_eval_op)

    for name, fn in (("solve", cmd_solve), ("exponent-fit", cmd_exponent_fit)):
        sp = sub.add_parser(name, help=f"{name} from a config file")
        sp.add_argument("--config", required=True)
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
        sp.add_argument("--h", type=float, help="override grid.h")
        if name == "exponent-fit":
            sp.add_argument("--anchor", required=True, help="boundary point, comma separated")
            sp.add_argument("--K", type=int, default=6)
            sp.add_argument("--degree", type=int, choices=(0, 1), default=0)
            sp.add_argument("--ratio", type=float, default=2.0)
            sp.add_argument("--band", type=float)
        common(sp)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("verify-barriers", help="check barrier inequalities on dyadic samples")
    sp.add_argument("--s", type=float, default=0.5)
    sp.add_argument(
        "--kind",
        action="append",
        choices=("phi1_dist_pow_s_out", "phi2_dist_pow_s_in", "phi3_dist_pow_3s2_out", "phi4_dist_pow_3s2_in"),
    )
    sp.add_argument("--calibrated", action="store_true", help="also calibrate and verify the two constructed barriers")
    sp.add_argument("--count", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-6)
    bounds(sp)
    common(sp)
    sp.set_defaults(func=cmd_verify_barriers)

    sp = sub.add_parser("counterexample-l0", help="rough-class roots and the indicator kernel")
    sp.add_argument("--s", type=float, nargs="+", default=[0.5])
    sp.add_argument("--no-equal-row", action="store_true")
    sp.add_argument("--tol", type=float, default=1e-4)
    bounds(sp)
    common(sp)
    sp.set_defaults(func=cmd_counterexample)

    sp = sub.add_parser("legendre", help="angular extension eigenfunctions and their Gram matrix")
    sp.add_argument("--s", type=float, default=0.5)
    sp.add_argument("--nmax", type=int, default=8)
    sp.add_argument("--points", type=int, default=65)
    sp.add_argument("--tol", type=float, default=1e-8)
    common(sp)
    sp.set_defaults(func=cmd_legendre)

    sp = sub.add_parser("flatten-check", help="kernel expansion under a boundary-flattening map")
    sp.add_argument("--gamma", type=float, default=0.5)
    sp.add_argument("--kappa", type=float, default=0.5)
    sp.add_argument("--c", type=float, default=0.25)
    sp.add_argument("--s", type=float, default=0.5)
    sp.add_argument("--tol", type=float, default=1e-6)
    common(sp)
    sp.set_defaults(func=cmd_flatten_check)

    sp = sub.add_parser("run", help="run experiments from config files")
    sp.add_argument("--config", nargs="+", required=True)
    sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    sp.add_argument("--tol", action="append", metavar="KEY=VALUE")
    sp.add_argument("--h", type=float, help="override the experiment grid step")
    common(sp)
    sp.set_defaults(func=cmd_run)
    return p


def _check_ranges(args) -> list:
    problems = []
    s_vals = args.s if isinstance(getattr(args, "s", None), list) else [getattr(args, "s", None)]
    for s in s_vals:
        if s is not None and not 0 < s < 1:
            problems.append(f"--s: {s} must lie in (0, 1)")
    lam, Lam = getattr(args, "lam", None), getattr(args, "Lam", None)
    if lam is not None and not 0 < lam <= Lam:
        problems.append("--lambda/--Lambda: need 0 < lambda <= Lambda")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        problems.append("--workers: must be at least 1")
    if getattr(args, "command", None) == "verify-barriers" and not args.kind:
        args.kind = ["phi1_dist_pow_s_out", "phi2_dist_pow_s_in", "phi3_dist_pow_3s2_out", "phi4_dist_pow_3s2_in"]
    return problems


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        problems = _check_ranges(args)
        if problems:
            raise ConfigError(problems)
        if args.workers is not None:
            os.environ["NONLOCAL_LAB_WORKERS"] = str(args.workers)
        return args.func(args)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"error: {msg}", file=sys.stderr)
        return 2
    except (FileNotFoundError, SolverInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
