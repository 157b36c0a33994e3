"""Bisection for the largest admissible delay bound or exponential rate.

Each probe recomputes the basis constants on ``[0, h]`` and rebuilds the
full LMI system, so probes are independent and a bracket ``(lo, hi)`` with
``lo`` certified feasible and ``hi`` not is maintained throughout.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketInvalid, ExpStabError, InfeasibleAtLo
from .inequality import Interval, compute_coefficients
from .lmi import build_theorem_lmis
from .model import PRESETS, TABLES, AnalysisParams, NetworkModel
from .sdp import check_system

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-4
DELAY_BRACKET = (0.1, 12.0)
RATE_LO = 1e-6
RATE_HI_FRACTION = 0.999
MAX_INDETERMINATE = 3


@dataclass
class SearchSpec:
    mode: str  # "max-delay" | "max-rate"
    lo: float
    hi: float
    tolerance: float = DEFAULT_TOL
    max_iters: int = 60
    post_scan: bool = True
    scan_points: int = 10
    scan_width: float = 0.5
    max_widen: int = 4
    solver: str = "clarabel"
    solver_tol: float | None = None
    quad_tol: float | None = None
    lmi_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("max-delay", "max-rate"):
            raise ValueError(f"unknown search mode {self.mode!r}")
        if not self.lo < self.hi:
            raise BracketInvalid(f"need lo < hi, got ({self.lo}, {self.hi})")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    @classmethod
    def default(cls, mode, model: NetworkModel = None, **kw):
        if mode == "max-delay":
            lo, hi = DELAY_BRACKET
        else:
            if model is None:
                raise ValueError("max-rate default bracket needs the model")
            lo, hi = RATE_LO, RATE_HI_FRACTION * model.c_min
        return cls(mode, kw.pop("lo", lo), kw.pop("hi", hi), **kw)


@dataclass(frozen=True)
class Probe:
    value: float
    status: str
    margin: float
    stage: str = "bisect"
    cert_passed: bool | None = None
    cert_slack: float | None = None

    def to_dict(self):
        return {"value": self.value, "status": self.status, "margin": self.margin, "stage": self.stage,
                "cert_passed": self.cert_passed, "cert_slack": self.cert_slack}


@dataclass
class SearchResult:
    optimum: float
    lo: float
    hi: float
    iterations: int
    probes: list
    indeterminate: int
    confidence: str
    post_scan_feasible: list = field(default_factory=list)
    report: object = None  # FeasibilityReport at the optimum
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "optimum": self.optimum,
            "bracket": [self.lo, self.hi],
            "iterations": self.iterations,
            "indeterminate": self.indeterminate,
            "confidence": self.confidence,
            "post_scan_feasible": self.post_scan_feasible,
            "warnings": self.warnings,
            "probes": [p.to_dict() for p in self.probes],
            "certificate": self.report.to_dict() if self.report is not None else None,
        }


def probe(model, h, mu, k, solver="clarabel", solver_tol=None, quad_tol=None, **lmi_options):
    """Build and solve the LMI system at one parameter point."""
    coeffs = None if quad_tol is None else compute_coefficients(Interval(0.0, h, k), quad_tol=quad_tol)
    system = build_theorem_lmis(model, AnalysisParams(h, mu, k), coeffs=coeffs, **lmi_options)
    return check_system(system, solver=solver, solver_tol=solver_tol)


def _record(value, rep, stage):
    cert = getattr(rep, "certification", None)
    return Probe(float(value), rep.status, float(rep.margin), stage,
                 None if cert is None else cert.passed, None if cert is None else cert.min_slack)


def _bisect(evaluate, spec: SearchSpec, cap=None):
    probes, indeterminate = [], 0
    warnings = []

    def run(value, stage):
        rep = evaluate(value)
        probes.append(_record(value, rep, stage))
        return rep

    lo_rep = run(spec.lo, "lo")
    if not lo_rep.feasible:
        raise InfeasibleAtLo(f"no certificate at the lower end {spec.lo} (status {lo_rep.status})")
    best = lo_rep
    lo, hi = spec.lo, spec.hi
    hi_rep = run(hi, "hi")
    widen = 0
    while hi_rep.feasible:
        lo, best = hi, hi_rep
        if cap is not None and hi >= cap:
            warnings.append(f"feasible at the cap {cap}; optimum is the cap")
            return lo, hi, 0, probes, indeterminate, best, warnings
        if widen >= spec.max_widen:
            raise BracketInvalid(f"still feasible at {hi} after {widen} widenings")
        new_hi = hi * 1.5 if cap is None else min(hi * 1.5, cap)
        warnings.append(f"feasible at hi={hi}; widening to {new_hi}")
        log.warning(warnings[-1])
        hi = new_hi
        hi_rep = run(hi, "hi")
        widen += 1

    iters = 0
    while hi - lo > spec.tolerance and iters < spec.max_iters:
        mid = 0.5 * (lo + hi)
        rep = run(mid, "bisect")
        if rep.status == "numerical-failure":
            # shrink the step toward the feasible side and retry once
            retry = lo + 0.75 * (mid - lo)
            rep2 = run(retry, "retry")
            if rep2.feasible:
                lo, best = retry, rep2
            elif rep2.status == "infeasible":
                hi = retry
            else:
                indeterminate += 1
                hi = mid
        elif rep.feasible:
            lo, best = mid, rep
        else:
            hi = mid
        iters += 1
    return lo, hi, iters, probes, indeterminate, best, warnings


def _finish(evaluate, spec, lo, hi, iters, probes, indet, best, warnings, cap=None):
    scan_hits = []
    if spec.post_scan:
        top = lo + spec.scan_width
        if cap is not None:
            top = min(top, cap)
        for v in np.linspace(lo, top, spec.scan_points + 1)[1:]:
            rep = evaluate(float(v))
            probes.append(_record(v, rep, "post-scan"))
            if rep.feasible:
                scan_hits.append(float(v))
    confidence = "high"
    if indet > MAX_INDETERMINATE or scan_hits:
        confidence = "low"
    if scan_hits:
        warnings.append(f"post-scan found feasible points above the optimum: {scan_hits}")
    return SearchResult(lo, lo, hi, iters, probes, indet, confidence, scan_hits, best, warnings)


def max_delay(model: NetworkModel, mu, k, spec: SearchSpec = None) -> SearchResult:
    """Largest ``h`` certified at fixed ``(mu, k)``."""
    spec = spec or SearchSpec.default("max-delay")
    AnalysisParams(spec.lo, mu, k).validate(model)

    def evaluate(h):
        return probe(model, h, mu, k, solver=spec.solver, solver_tol=spec.solver_tol, quad_tol=spec.quad_tol,
                     **spec.lmi_options)

    out = _bisect(evaluate, spec)
    return _finish(evaluate, spec, *out)


def max_rate(model: NetworkModel, h, mu, spec: SearchSpec = None) -> SearchResult:
    """Largest ``k`` certified at fixed ``(h, mu)``."""
    spec = spec or SearchSpec.default("max-rate", model)
    if spec.hi >= model.c_min:
        raise BracketInvalid(f"rate bracket top {spec.hi} must stay below min c_i = {model.c_min}")
    cap = RATE_HI_FRACTION * model.c_min

    def evaluate(k):
        return probe(model, h, mu, k, solver=spec.solver, solver_tol=spec.solver_tol, quad_tol=spec.quad_tol,
                     **spec.lmi_options)

    out = _bisect(evaluate, spec, cap=cap)
    return _finish(evaluate, spec, *out, cap=cap)


# -- table reproduction ---------------------------------------------------------


@dataclass
class TableRow:
    example: int
    mu: float
    fixed: float
    bound: float
    paper_value: float
    deviation: float
    iterations: int
    confidence: str
    error: str = ""
    fallback_feasible_low: bool | None = None
    fallback_infeasible_high: bool | None = None
    result: SearchResult | None = None

    CSV_COLUMNS = ("example", "mu", "k_or_h_fixed", "bound", "paper_value", "deviation", "iterations", "confidence")

    def csv_row(self):
        return [self.example, self.mu, self.fixed, self.bound, self.paper_value, self.deviation,
                self.iterations, self.confidence]

    @property
    def within_1pct(self):
        return not self.error and abs(self.deviation) <= 0.01

    @property
    def fallback_ok(self):
        return bool(self.fallback_feasible_low) and bool(self.fallback_infeasible_high)


def _cell(args):
    example_id, mu, target, tol, post_scan, fallback, solver, lmi_options = args
    lmi_options = dict(lmi_options)
    tgt = TABLES[example_id]
    model = PRESETS[tgt.preset]
    try:
        if tgt.mode == "max-rate":
            spec = SearchSpec.default("max-rate", model, tolerance=tol, post_scan=post_scan, solver=solver,
                                      lmi_options=lmi_options)
            res = max_rate(model, tgt.fixed, mu, spec)
        else:
            spec = SearchSpec.default("max-delay", tolerance=tol, post_scan=post_scan, solver=solver,
                                      lmi_options=lmi_options)
            res = max_delay(model, mu, tgt.fixed, spec)
    except ExpStabError as exc:
        return TableRow(example_id, mu, tgt.fixed, math.nan, target, math.nan, 0, "error", f"{exc.code}: {exc}")
    row = TableRow(example_id, mu, tgt.fixed, res.optimum, target, (res.optimum - target) / target,
                   res.iterations, res.confidence, result=res)
    if fallback:
        def at(v):
            if tgt.mode == "max-rate":
                return probe(model, tgt.fixed, mu, v, solver=solver, **lmi_options)
            return probe(model, v, mu, tgt.fixed, solver=solver, **lmi_options)

        low = 0.97 * target
        high = 1.05 * target
        row.fallback_feasible_low = at(low).feasible
        if tgt.mode == "max-rate" and high >= model.c_min:
            row.fallback_infeasible_high = True
        else:
            row.fallback_infeasible_high = at(high).status == "infeasible"
    return row


def reproduce_table(example_id, tolerance=DEFAULT_TOL, jobs=1, post_scan=True, fallback=True,
                    solver="clarabel", lmi_options=None):
    """Search every column of one reference table; errors are kept per cell."""
    if example_id not in TABLES:
        raise ValueError(f"example_id must be one of {sorted(TABLES)}, got {example_id}")
    tgt = TABLES[example_id]
    cells = [(example_id, mu, pv, tolerance, post_scan, fallback, solver, tuple(sorted((lmi_options or {}).items())))
             for mu, pv in zip(tgt.mus, tgt.values)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_cell, cells))
    return [_cell(c) for c in cells]
