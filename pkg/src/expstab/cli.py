"""Command-line front end.

Every subcommand writes its files into a private staging directory and
moves them into the output directory only after success, so a failed run
leaves nothing behind.  Exit codes: 0 feasible or success, 1 infeasible,
2 numerical failure, 64 bad configuration or usage.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import shutil
import sys
import tempfile
from importlib import metadata

import jsonschema
import numpy as np

from . import errors
from .dde_sim import DEFAULT_DT, DEFAULT_T_END, DelayFunction, estimate_decay_rate, simulate
from .lmi import build_theorem_lmis, compute_overshoot
from .inequality import Interval, compute_coefficients
from .model import PRESETS, TABLES, AnalysisParams, NetworkModel
from .sdp import SOLVERS, check_system
from .search import SearchSpec, TableRow, max_delay, max_rate, reproduce_table
from .verification import run_suite

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_NUMERICAL = 2
EXIT_CONFIG = 64

OUT_ENV = "EXPSTAB_OUT"
DEFAULT_OUT = "expstab-out"

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NUMS = {"type": "array", "items": _NUM, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": sorted(PRESETS)},
                "name": {"type": "string"},
                "n": {"type": "integer", "minimum": 1},
                "A": _NUMS,
                "B": _NUMS,
                "C": _NUMS,
                "L": _NUMS,
            },
            "oneOf": [{"required": ["preset"]}, {"required": ["n", "A", "B", "C", "L"]}],
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"h": _POS, "mu": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}, "k": _POS},
        },
        "delay": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"h0": _POS, "amplitude": {"type": "number", "minimum": 0},
                           "frequency": {"type": "number", "minimum": 0}},
            "required": ["h0"],
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"z0": _NUMS, "t_end": _POS, "dt": _POS, "every": {"type": "integer", "minimum": 1}},
        },
        "search": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["max-delay", "max-rate"]},
                "lo": _POS,
                "hi": _POS,
                "tolerance": _POS,
                "max_iters": {"type": "integer", "minimum": 1},
                "post_scan": {"type": "boolean"},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"name": {"enum": list(SOLVERS)}, "tolerance": _POS},
        },
        "lmi": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"xi_reading": {"enum": ["mapped", "direct"]},
                           "e6_scale": {"enum": ["derived", "printed"]}},
        },
        "quadrature": {"type": "object", "additionalProperties": False, "properties": {"tol": _POS}},
        "output_dir": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
}


class UsageError(errors.ConfigError):
    pass


def _path(err):
    parts = ["$"]
    for p in err.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else f".{p}")
    return "".join(parts)


def validate_config(cfg):
    """Raise ``ConfigError`` listing every schema violation with its field path."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    found = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    problems = [f"{_path(e)}: {e.message}" for e in found]
    m = cfg.get("model")
    if isinstance(m, dict) and isinstance(m.get("n"), int) and "preset" not in m:
        n = m["n"]
        for key, sizes in (("A", (n * n,)), ("B", (n * n,)), ("C", (n, n * n)), ("L", (n,))):
            if isinstance(m.get(key), list) and len(m[key]) not in sizes:
                problems.append(f"$.model.{key}: expected {' or '.join(map(str, sizes))} entries for n={n}, "
                                f"got {len(m[key])}")
    if problems:
        raise errors.ConfigError("; ".join(problems))
    return cfg


def model_from_config(m):
    if "preset" in m:
        return PRESETS[m["preset"]]
    n = m["n"]
    C = np.asarray(m["C"], dtype=float)
    C = C if C.size == n else C.reshape(n, n)
    try:
        return NetworkModel(np.reshape(m["A"], (n, n)), np.reshape(m["B"], (n, n)), C, m["L"],
                            name=m.get("name", "custom"))
    except errors.ExpStabError as exc:
        raise errors.ConfigError(f"$.model: {exc}") from exc


def _trajectory_setup(preset):
    for tgt in TABLES.values():
        if tgt.preset == preset and tgt.delay:
            return tgt
    return None


def _load_config(args):
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise errors.ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise errors.ConfigError(f"{args.config}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if getattr(args, "preset", None):
        cfg["model"] = {"preset": args.preset}
    overrides = {
        "params": {"h": getattr(args, "h", None), "mu": getattr(args, "mu", None), "k": getattr(args, "k", None)},
        "solver": {"name": getattr(args, "solver", None), "tolerance": getattr(args, "solver_tol", None)},
        "lmi": {"xi_reading": getattr(args, "xi_reading", None), "e6_scale": getattr(args, "e6_scale", None)},
        "search": {"mode": getattr(args, "mode", None), "lo": getattr(args, "lo", None),
                   "hi": getattr(args, "hi", None), "tolerance": getattr(args, "tol", None)},
        "simulation": {"t_end": getattr(args, "t_end", None), "dt": getattr(args, "dt", None),
                       "every": getattr(args, "every", None)},
    }
    if getattr(args, "z0", None) is not None:
        overrides["simulation"]["z0"] = _parse_floats(args.z0, "--z0")
    if getattr(args, "h0", None) is not None:
        overrides["delay"] = {"h0": args.h0, "amplitude": args.amplitude or 0.0, "frequency": args.frequency or 0.0}
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "no_post_scan", False):
        overrides["search"]["post_scan"] = False
    for section, vals in overrides.items():
        vals = {k: v for k, v in vals.items() if v is not None}
        if vals:
            cfg.setdefault(section, {}).update(vals)
    return validate_config(cfg)


def _parse_floats(text, flag):
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise errors.ConfigError(f"{flag}: expected comma-separated numbers, got {text!r}") from exc


def _require(cfg, section, *keys):
    missing = [k for k in keys if k not in cfg.get(section, {})]
    if missing:
        raise errors.ConfigError(", ".join(f"$.{section}.{k}: required" for k in missing))
    return cfg[section]


def _model(cfg):
    if "model" not in cfg:
        raise errors.ConfigError("$.model: required (use --preset or a config file)")
    return model_from_config(cfg["model"])


def _clean(obj):
    """JSON-safe copy: NaN and infinities become null, arrays become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class Outputs:
    """Files staged during a command and moved into place together at the end."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.stage = tempfile.mkdtemp(prefix="expstab-")
        self.files = []

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.stage, name)

    def json(self, name, payload):
        with open(self.path(name), "w") as fh:
            json.dump(_clean(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    def publish(self, manifest):
        os.makedirs(self.out_dir, exist_ok=True)
        for name in self.files:
            shutil.move(os.path.join(self.stage, name), os.path.join(self.out_dir, name))
        with open(os.path.join(self.out_dir, manifest["manifest"]), "w") as fh:
            json.dump(_clean(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.discard()

    def discard(self):
        shutil.rmtree(self.stage, ignore_errors=True)


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".10g")
    return v


# -- subcommands ------------------------------------------------------------


def cmd_analyze(cfg, out: Outputs):
    model = _model(cfg)
    p = _require(cfg, "params", "h", "mu", "k")
    params = AnalysisParams(p["h"], p["mu"], p["k"]).validate(model)
    quad_tol = cfg.get("quadrature", {}).get("tol", 1e-9)
    coeffs = compute_coefficients(Interval(0.0, params.h, params.k), quad_tol=quad_tol)
    system = build_theorem_lmis(model, params, coeffs=coeffs, **cfg.get("lmi", {}))
    solver = cfg.get("solver", {})
    report = check_system(system, solver=solver.get("name", "clarabel"), solver_tol=solver.get("tolerance"))
    payload = {
        "model": model.to_dict(),
        "params": {"h": params.h, "mu": params.mu, "k": params.k},
        "coefficients": coeffs.as_dict(),
        "decision_variables": system.registry.size,
        "report": report.to_dict(),
        "overshoot": None,
    }
    if report.feasible:
        payload["overshoot"] = compute_overshoot(report.witness, model, params).to_dict()
    out.json("analyze.json", payload)
    code = {"feasible": EXIT_OK, "infeasible": EXIT_INFEASIBLE}.get(report.status, EXIT_NUMERICAL)
    return code, {"status": report.status, "margin": report.margin}


def _spec_from_config(cfg, model, mode):
    s = dict(cfg.get("search", {}))
    s.pop("mode", None)
    solver = cfg.get("solver", {})
    kw = {k: s[k] for k in ("lo", "hi", "tolerance", "max_iters", "post_scan") if k in s}
    return SearchSpec.default(mode, model, solver=solver.get("name", "clarabel"), solver_tol=solver.get("tolerance"),
                              quad_tol=cfg.get("quadrature", {}).get("tol"), lmi_options=dict(cfg.get("lmi", {})),
                              **kw)


def cmd_search(cfg, out: Outputs):
    model = _model(cfg)
    mode = cfg.get("search", {}).get("mode", "max-delay")
    p = cfg.get("params", {})
    if mode == "max-delay":
        p = _require(cfg, "params", "mu", "k")
        res = max_delay(model, p["mu"], p["k"], _spec_from_config(cfg, model, mode))
        fixed = {"mu": p["mu"], "k": p["k"]}
    else:
        p = _require(cfg, "params", "h", "mu")
        res = max_rate(model, p["h"], p["mu"], _spec_from_config(cfg, model, mode))
        fixed = {"h": p["h"], "mu": p["mu"]}
    out.json("search.json", {"model": model.to_dict(), "mode": mode, "fixed": fixed, "result": res.to_dict()})
    out.csv("search_probes.csv", ["value", "status", "margin", "stage"],
            [[_fmt(pr.value), pr.status, _fmt(pr.margin), pr.stage] for pr in res.probes])
    return EXIT_OK, {"optimum": res.optimum, "confidence": res.confidence}


def cmd_reproduce(cfg, out: Outputs, example_id, jobs=1, fallback=True):
    if example_id not in TABLES:
        raise errors.ConfigError(f"example id must be one of {sorted(TABLES)}, got {example_id}")
    s = cfg.get("search", {})
    solver = cfg.get("solver", {})
    rows = reproduce_table(example_id, tolerance=s.get("tolerance", 1e-4), jobs=jobs,
                           post_scan=s.get("post_scan", True), fallback=fallback,
                           solver=solver.get("name", "clarabel"), lmi_options=cfg.get("lmi", {}))
    out.csv(f"table{example_id}.csv", list(TableRow.CSV_COLUMNS), [[_fmt(v) for v in r.csv_row()] for r in rows])
    cells = []
    for r in rows:
        cell = {
            "mu": r.mu, "bound": r.bound, "paper_value": r.paper_value, "deviation": r.deviation,
            "within_1pct": r.within_1pct, "error": r.error or None,
            "fallback": {"feasible_at_0.97": r.fallback_feasible_low, "infeasible_at_1.05": r.fallback_infeasible_high},
        }
        if r.result is not None:
            cell["post_scan_feasible"] = r.result.post_scan_feasible
            cell["warnings"] = r.result.warnings
        if r.error:
            cell["discrepancy"] = "search failed"
        elif not r.within_1pct:
            cell["discrepancy"] = (f"bound {r.bound:.4f} deviates {100 * r.deviation:+.2f}% from {r.paper_value}; "
                                   f"fallback {'holds' if r.fallback_ok else 'fails'}")
        cells.append(cell)
    tgt = TABLES[example_id]
    out.json(f"table{example_id}.json", {"example": example_id, "preset": tgt.preset, "mode": tgt.mode,
                                         "fixed": tgt.fixed, "cells": cells})
    code = EXIT_NUMERICAL if any(r.error for r in rows) else EXIT_OK
    return code, {"bounds": [r.bound for r in rows]}


def cmd_simulate(cfg, out: Outputs):
    model = _model(cfg)
    sim = cfg.get("simulation", {})
    setup = _trajectory_setup(cfg["model"].get("preset"))
    if "delay" in cfg:
        d = cfg["delay"]
        delay = DelayFunction(d["h0"], d.get("amplitude", 0.0), d.get("frequency", 0.0))
    elif setup is not None:
        delay = DelayFunction(*setup.delay)
    elif "h" in cfg.get("params", {}):
        delay = DelayFunction(cfg["params"]["h"])
    else:
        raise errors.ConfigError("$.delay: required for this model (or give params.h for a constant delay)")
    if "z0" in sim:
        z0 = sim["z0"]
    elif setup is not None:
        z0 = list(setup.z0)
    else:
        raise errors.ConfigError("$.simulation.z0: required for this model")
    if len(z0) != model.n:
        raise errors.ConfigError(f"$.simulation.z0: expected {model.n} entries, got {len(z0)}")
    traj = simulate(model, delay, z0, sim.get("t_end", DEFAULT_T_END), sim.get("dt", DEFAULT_DT))
    traj.write_csv(out.path("trajectory.csv"), every=sim.get("every", 1))
    out.json("trajectory.json", traj.sidecar())
    summary = {"final_norm": float(traj.norms[-1])}
    try:
        summary["k_est"] = estimate_decay_rate(traj, (traj.t[-1] / 2, traj.t[-1]))
    except errors.DegenerateWindow:
        summary["k_est"] = None
    return EXIT_OK, summary


def cmd_verify(cfg, out: Outputs, count):
    seed = cfg.get("seed", 0)
    report = run_suite(seed=seed, count=count)
    out.json("verify.json", report.to_dict())
    return (EXIT_OK if report.passed else EXIT_INFEASIBLE), {"violations": report.violations}


# -- argument parsing ---------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p, model=True):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    if model:
        p.add_argument("--preset", choices=sorted(PRESETS))


def _solver_flags(p):
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--solver-tol", type=float)
    p.add_argument("--xi-reading", choices=("mapped", "direct"))
    p.add_argument("--e6-scale", choices=("derived", "printed"))


def build_parser():
    parser = _Parser(prog="expstab", description="Exponential stability analysis of delayed neural networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="check the LMI criterion at one (h, mu, k)")
    _common(p)
    _solver_flags(p)
    p.add_argument("--h", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--k", type=float)

    p = sub.add_parser("search", help="bisect for the largest delay bound or rate")
    _common(p)
    _solver_flags(p)
    p.add_argument("--mode", choices=("max-delay", "max-rate"))
    p.add_argument("--h", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--no-post-scan", action="store_true")

    p = sub.add_parser("reproduce", help="rerun a reference result table")
    _common(p, model=False)
    _solver_flags(p)
    p.add_argument("example_id", type=int, choices=sorted(TABLES))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--tol", type=float)
    p.add_argument("--no-post-scan", action="store_true")
    p.add_argument("--no-fallback", action="store_true")

    p = sub.add_parser("simulate", help="integrate the delayed network")
    _common(p)
    p.add_argument("--z0", help='initial state, e.g. "-1,1"')
    p.add_argument("--h", type=float, help="constant delay when no delay function is given")
    p.add_argument("--h0", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--frequency", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--every", type=int, help="write every n-th sample")

    p = sub.add_parser("verify-inequalities", help="seeded property suite for the integral inequalities")
    _common(p, model=False)
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int, default=1000)
    return parser


def _exit_code(exc):
    if isinstance(exc, (errors.ConfigError, errors.InvalidParams, errors.DimensionMismatch,
                        errors.BracketInvalid, errors.StepTooLarge)):
        return EXIT_CONFIG
    if isinstance(exc, errors.InfeasibleAtLo):
        return EXIT_INFEASIBLE
    return EXIT_NUMERICAL


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _glue_negative_values(argv):
    """Let ``--z0 -1,1`` through: argparse would read ``-1,1`` as a flag."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--z0" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"--z0={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    out = None
    try:
        args = build_parser().parse_args(_glue_negative_values(argv))
        cfg = _load_config(args)
        out_dir = args.out or os.environ.get(OUT_ENV) or cfg.get("output_dir") or DEFAULT_OUT
        out = Outputs(out_dir)
        if args.command == "analyze":
            code, summary = cmd_analyze(cfg, out)
            stem = "analyze"
        elif args.command == "search":
            code, summary = cmd_search(cfg, out)
            stem = "search"
        elif args.command == "reproduce":
            if args.jobs < 1:
                raise errors.ConfigError("--jobs must be >= 1")
            code, summary = cmd_reproduce(cfg, out, args.example_id, jobs=args.jobs, fallback=not args.no_fallback)
            stem = f"table{args.example_id}"
        elif args.command == "simulate":
            code, summary = cmd_simulate(cfg, out)
            stem = "trajectory"
        else:
            if args.count < 1:
                raise errors.ConfigError("--count must be >= 1")
            code, summary = cmd_verify(cfg, out, args.count)
            stem = "verify"
        out.publish({
            "manifest": f"{stem}.manifest.json",
            "command": args.command,
            "argv": argv,
            "config": cfg,
            "outputs": sorted(out.files),
            "exit_code": code,
            "summary": summary,
            "version": _version(),
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        })
        print(json.dumps(_clean({"command": args.command, "exit_code": code, **summary}), sort_keys=True))
        return code
    except errors.ExpStabError as exc:
        if out is not None:
            out.discard()
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return _exit_code(exc)
    except BaseException:
        if out is not None:
            out.discard()
        raise


if __name__ == "__main__":
    sys.exit(main())
