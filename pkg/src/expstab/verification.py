"""Seeded property suite for the integral inequalities.

Each trial draws an interval, a rate, a positive definite ``R`` and a
random vector function built from polynomials, sinusoids, exponentials
and a jump, then checks one inequality by quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .inequality import (
    Interval,
    MomentVector,
    basis_samples,
    compute_coefficients,
    lemma2_gap,
    lemma4_bound,
    lemma6_bounds,
    lemma6_oracle,
)
from .quadrature import Grid, SampledPath

SLACK_TOL = 1e-8
LEMMAS = ("lemma2", "lemma4", "lemma6")


@dataclass
class RandomFunction:
    """``x_i(u) = sum_m c[m, i] g_m((u - a) / L)`` plus an optional jump."""

    a: float
    length: float
    coef: np.ndarray  # (7, n)
    omega: float
    phase: float
    lam: float
    jump_at: float | None = None
    jump: np.ndarray | None = None

    def _features(self, t):
        w, p, lam = self.omega, self.phase, self.lam
        g = np.stack([np.ones_like(t), t, t**2, t**3, np.sin(w * t + p), np.exp(lam * t), np.cos(3 * w * t)])
        dg = np.stack([np.zeros_like(t), np.ones_like(t), 2 * t, 3 * t**2, w * np.cos(w * t + p),
                       lam * np.exp(lam * t), -3 * w * np.sin(3 * w * t)])
        return g, dg

    def __call__(self, u):
        t = (np.atleast_1d(np.asarray(u, dtype=float)) - self.a) / self.length
        g, _ = self._features(t)
        x = g.T @ self.coef
        if self.jump is not None:
            x = x + (t[:, None] > self.jump_at) * self.jump
        return x

    def derivative(self, u):
        t = (np.atleast_1d(np.asarray(u, dtype=float)) - self.a) / self.length
        _, dg = self._features(t)
        return dg.T @ self.coef / self.length


def _draw_setup(rng):
    n = int(rng.integers(1, 4))
    a = float(rng.uniform(-3.0, 3.0))
    length = float(np.exp(rng.uniform(np.log(0.05), np.log(8.0))))
    k = float(np.exp(rng.uniform(np.log(1e-7), np.log(2.0))))
    G = rng.normal(size=(n, n))
    R = G @ G.T + 0.05 * np.eye(n)
    return n, Interval(a, a + length, k), R


def _draw_function(rng, n, iv: Interval, smooth):
    coef = rng.normal(size=(7, n)) * rng.choice([0.0, 1.0], size=(7, 1), p=[0.3, 0.7])
    f = RandomFunction(
        iv.a, iv.length, coef,
        omega=float(rng.uniform(0.0, 12.0)),
        phase=float(rng.uniform(0.0, 2 * np.pi)),
        lam=float(rng.uniform(-3.0, 3.0)),
    )
    if not smooth and rng.random() < 0.5:
        f.jump_at = float(rng.uniform(0.1, 0.9))
        f.jump = rng.normal(size=n)
    return f


def _grid(iv, breaks=()):
    return Grid.gauss(iv.a, iv.b, breaks=breaks, panels=16, order=16)


def check_lemma2(rng):
    n, iv, R = _draw_setup(rng)
    coeffs = compute_coefficients(iv)
    f = _draw_function(rng, n, iv, smooth=False)
    breaks = [coeffs.split] + ([iv.a + f.jump_at * iv.length] if f.jump is not None else [])
    g = _grid(iv, breaks)
    return lemma2_gap(f(g.nodes), basis_samples(iv, coeffs, g.nodes), iv.weight(g.nodes), R, g)


def check_lemma4(rng):
    n, iv, R = _draw_setup(rng)
    coeffs = compute_coefficients(iv)
    f = _draw_function(rng, n, iv, smooth=False)
    breaks = [coeffs.split] + ([iv.a + f.jump_at * iv.length] if f.jump is not None else [])
    g = _grid(iv, breaks)
    z = f(g.nodes)
    w = iv.weight(g.nodes)
    lhs = float(g.integrate(np.einsum("qi,ij,qj->q", z, R, z) * w))
    rhs = lemma4_bound(MomentVector.from_samples(g, w[:, None] * z, coeffs.split), R, coeffs)
    return lhs - rhs


def check_lemma6(rng):
    n, iv, R = _draw_setup(rng)
    f = _draw_function(rng, n, iv, smooth=True)
    g = _grid(iv)
    path = SampledPath.from_callables(g, lambda u: f(u).T, lambda u: f.derivative(u).T)
    bounds = lemma6_bounds(path, R)
    oracle = lemma6_oracle(path, R)
    return min(bounds[0] - oracle[0], bounds[1] - oracle[1])


CHECKS = {"lemma2": check_lemma2, "lemma4": check_lemma4, "lemma6": check_lemma6}


@dataclass
class LemmaReport:
    name: str
    trials: int
    violations: int
    min_slack: float
    worst_trial: int

    @property
    def passed(self):
        return self.violations == 0


@dataclass
class SuiteReport:
    seed: int
    count: int
    tol: float
    lemmas: dict = field(default_factory=dict)

    @property
    def violations(self):
        return sum(r.violations for r in self.lemmas.values())

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self):
        return {
            "seed": self.seed,
            "count": self.count,
            "tol": self.tol,
            "violations": self.violations,
            "lemmas": {k: {"trials": r.trials, "violations": r.violations, "min_slack": r.min_slack,
                           "worst_trial": r.worst_trial} for k, r in self.lemmas.items()},
        }


def run_suite(seed=0, count=1000, tol=SLACK_TOL, lemmas=LEMMAS) -> SuiteReport:
    """Run ``count`` trials per inequality; trial ``i`` of each lemma is seeded by ``(seed, lemma, i)``."""
    report = SuiteReport(seed, count, tol)
    for idx, name in enumerate(lemmas):
        check = CHECKS[name]
        slacks = np.array([check(np.random.default_rng([seed, idx, i])) for i in range(count)])
        worst = int(np.argmin(slacks)) if count else -1
        report.lemmas[name] = LemmaReport(name, count, int(np.sum(slacks < -tol)),
                                          float(slacks[worst]) if count else float("nan"), worst)
    return report
