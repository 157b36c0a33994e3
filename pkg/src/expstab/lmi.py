"""Assembly of the exponential-stability LMI conditions.

The augmented state has twelve ``n``-blocks, in order: ``z(t)``,
``z(t-h(t))``, ``z(t-h)``, ``f(z(t))``, ``f(z(t-h(t)))``, the averages of
``z`` over ``[t-h, t]``, ``[t-h(t), t]`` and ``[t-h, t-h(t)]``, the three
matching normalised double integrals, and ``z(t-xi)``.  ``selector(i, n)``
picks block ``i`` (1-based).

Conditions emitted: ``Phi + Theta1 < 0``, ``Phi + Theta2 < 0``,
``Gamma > 0`` and definiteness of every decision matrix.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .affine import AffineSymmetricExpression, DecisionRegistry
from .errors import DimensionMismatch, IndexOutOfRange, InvalidParams, NotAWitness
from .inequality import Interval, WeightedBasisCoefficients, compute_coefficients
from .model import AnalysisParams, NetworkModel

NBLOCKS = 12
SYMMETRIC_POSITIVE = ("P", "Q", "U1", "U2", "U3", "Z1", "Z2", "Z3", "N1", "N2", "M1", "M2")
DIAGONAL_POSITIVE = ("D1", "D2", "R1", "R2")
LEGENDRE_WEIGHTS = (1.0, 3.0, 5.0)


def selector(i, n, blocks=NBLOCKS):
    """``(blocks*n) x n`` block column with the identity in block ``i`` (1-based)."""
    if not 1 <= i <= blocks:
        raise IndexOutOfRange(f"block index {i} outside 1..{blocks}")
    E = np.zeros((blocks * n, n))
    E[(i - 1) * n:i * n, :] = np.eye(n)
    return E


def build_es(model: NetworkModel):
    """Block column ``e_s`` with ``e_s^T eta = z'(t)``."""
    n = model.n
    return -selector(1, n) @ model.C.T + selector(4, n) @ model.A.T + selector(5, n) @ model.B.T


def declare_decision_variables(n) -> DecisionRegistry:
    return DecisionRegistry.from_layout(n)


@dataclass(frozen=True)
class Constraint:
    name: str
    expr: AffineSymmetricExpression
    sense: str  # "<0" or ">0"
    diagonal: bool = False


@dataclass(frozen=True)
class LmiSystem:
    registry: DecisionRegistry
    constraints: tuple
    model: NetworkModel
    params: AnalysisParams
    coeffs: WeightedBasisCoefficients
    xi_delay: float
    blocks: dict = field(default_factory=dict, repr=False)
    variant: dict = field(default_factory=dict)

    def __getitem__(self, name) -> Constraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def names(self):
        return [c.name for c in self.constraints]


def step_row_coefficients(h, coeffs, e6_scale="derived"):
    """Weights of ``(e1, e3, e6, e12)`` in the step-function term of the Z3 bound.

    ``e6_scale="derived"`` uses ``h q13 / q1``, which is what substituting the
    average block into ``int z`` gives; ``"printed"`` drops the factor ``h``.
    """
    c = coeffs
    r = c.q13 / c.q1
    w6 = h * r if e6_scale == "derived" else r
    return (1.0 - (h + c.c1) * r, -(1.0 + c.c4 - c.c1 * r), w6, c.c4)


def _gammas(h, coeffs, n):
    e = {i: selector(i, n) for i in range(1, NBLOCKS + 1)}
    c = coeffs
    g1 = [e[1] - e[2], e[1] + e[2] - 2 * e[7], e[1] - e[2] + 6 * e[7] - 6 * e[10]]
    g2 = [e[2] - e[3], e[2] + e[3] - 2 * e[8], e[2] - e[3] + 6 * e[8] - 6 * e[11]]
    g3 = [
        e[1] - e[3],
        (h + c.c1) * e[1] - c.c1 * e[3] - h * e[6],
        (h * h + c.c2 * h + c.c3) * e[1] - c.c3 * e[3] - c.c2 * h * e[6] - h * h * e[9],
    ]
    return e, g1, g2, g3


def build_theorem_lmis(model: NetworkModel, params: AnalysisParams, coeffs: WeightedBasisCoefficients = None,
                       xi_reading="mapped", e6_scale="derived") -> LmiSystem:
    """Assemble the full constraint set for ``(model, params)``.

    ``coeffs`` must be computed on ``[0, h]`` with rate ``k``; they are
    computed here when omitted.  ``xi_reading="mapped"`` takes the delay of
    the ``z(t-xi)`` block as ``h - split``; ``"direct"`` uses ``split``.
    """
    params.validate(model)
    n, h, mu, k = model.n, float(params.h), float(params.mu), float(params.k)
    if coeffs is None:
        coeffs = compute_coefficients(Interval(0.0, h, k))
    if not 0 < coeffs.split < h:
        raise InvalidParams(f"split {coeffs.split} not inside (0, h={h}); coefficients were not computed on [0, h]")
    if xi_reading not in ("mapped", "direct"):
        raise ValueError(f"unknown xi reading {xi_reading!r}")
    if e6_scale not in ("derived", "printed"):
        raise ValueError(f"unknown e6 scale {e6_scale!r}")
    xi = h - coeffs.split if xi_reading == "mapped" else coeffs.split

    reg = declare_decision_variables(n)
    nv = reg.size
    e, g1, g2, g3 = _gammas(h, coeffs, n)
    es = build_es(model)
    Lm = np.diag(model.L)
    c = coeffs

    def quad(left, name, scale=1.0):
        return AffineSymmetricExpression.product(reg, left, name, None, scale)

    def sy(left, name, right, scale=1.0):
        return AffineSymmetricExpression.sym_product(reg, left, name, right, scale)

    zeta1 = np.hstack([e[1], h * e[7], h * e[9]])
    zeta2 = np.hstack([e[1], h * e[8], h * e[9]])
    zeta3 = np.hstack([es, e[1] - e[3], 2 * (e[1] - e[6])])
    zeta4 = np.hstack([e[1], h * e[6], h * e[9]])
    e1L = e[1] @ Lm

    xi1 = (
        sy(zeta4, "P", zeta4, k)
        + sy(e[4], "D1", e[1], 2 * k)
        + sy(e1L - e[4], "D2", e[1], 2 * k)
        + sy(e[4], "D1", es)
        + sy(e1L - e[4], "D2", es)
    )

    grow = math.exp(2 * k * h)
    xi2 = (
        quad(np.hstack([e[1], e[4]]), "Q", grow)
        + quad(e[1], "U1", grow)
        + quad(e[1], "U2", grow)
        - quad(np.hstack([e[2], e[5]]), "Q", 1.0 - mu)
        - quad(e[12], "U2", math.exp(2 * k * (h - xi)))
        + quad(e[12], "U3", math.exp(2 * k * (h - xi)))
        - quad(e[3], "U1")
        - quad(e[3], "U3")
    )

    w1, w3, w6, w12 = step_row_coefficients(h, c, e6_scale)
    step_row = w1 * e[1] + w3 * e[3] + w6 * e[6] + w12 * e[12]
    xi3 = (
        quad(es, "Z1", h * h)
        + quad(e[1], "Z2", h * h)
        + quad(es, "Z3", h * h)
        - quad(e[6], "Z2", h**3 / c.q0)
        - quad(2 * c.c1 / h * e[6] + e[9], "Z2", h**5 / (4 * c.q1))
        - quad(g3[0], "Z3", h / c.q0)
        - quad(g3[1], "Z3", h / c.q1)
        - quad(g3[2], "Z3", h / c.q2)
        - quad(step_row, "Z3", h / c.q3)
    )

    decay = math.exp(-2 * k * h)
    xi4 = (
        quad(es, "N1", h * h / 2)
        + quad(es, "N2", h * h / 2)
        - quad(e[1] - e[7], "N1", 2 * decay)
        - quad(e[1] + 2 * e[7] - 3 * e[10], "N1", 4 * decay)
        - quad(e[2] - e[8], "N1", 2 * decay)
        - quad(e[2] + 2 * e[8] - 3 * e[11], "N1", 4 * decay)
        - quad(e[2] - e[7], "N2", 2 * decay)
        - quad(e[2] - 4 * e[7] + 3 * e[10], "N2", 4 * decay)
        - quad(e[3] - e[8], "N2", 2 * decay)
        - quad(e[3] - 4 * e[8] + 3 * e[11], "N2", 4 * decay)
    )

    xi5 = quad(e[1], "M1", mu / h) - quad(e[1], "M2", mu / h)

    psi = sy(np.hstack(g1), "S", np.hstack(g2), -decay)
    for wgt, a1, a2 in zip(LEGENDRE_WEIGHTS, g1, g2):
        psi = psi - quad(a1, "Z1", wgt * decay) - quad(a2, "Z1", wgt * decay)

    pi = (
        sy(e1L, "R1", e[4])
        - quad(e[4], "R1", 2.0)
        + sy(e[2] @ Lm, "R2", e[5])
        - quad(e[5], "R2", 2.0)
    )

    phi1 = sy(zeta1, "P", zeta3)
    phi2 = sy(e[1], "M1", e[1], k) + sy(e[1], "M1", es)
    psi1 = sy(zeta2, "P", zeta3)
    psi2 = sy(e[1], "M2", e[1], k) + sy(e[1], "M2", es)
    theta1 = phi1 + phi2
    theta2 = psi1 + psi2

    Phi = xi1 + xi2 + xi3 + xi4 + xi5 + psi + pi

    F = {j: selector(j, n, blocks=6) for j in range(1, 7)}
    gamma = sy(np.hstack([F[1], F[2], F[3]]), "S", np.hstack([F[4], F[5], F[6]]))
    for j, wgt in zip((1, 2, 3), LEGENDRE_WEIGHTS):
        gamma = gamma + quad(F[j], "Z1", wgt) + quad(F[j], "N1", wgt)
        gamma = gamma + quad(F[j + 3], "Z1", wgt) + quad(F[j + 3], "N2", wgt)

    constraints = [
        Constraint("Phi+Theta1", Phi + theta1, "<0"),
        Constraint("Phi+Theta2", Phi + theta2, "<0"),
        Constraint("Gamma", gamma, ">0"),
    ]
    for name in SYMMETRIC_POSITIVE:
        constraints.append(Constraint(name, quad(np.eye(reg[name].dim), name), ">0"))
    for name in DIAGONAL_POSITIVE:
        constraints.append(Constraint(name, quad(np.eye(n), name), ">0", diagonal=True))

    blocks = {"Xi1": xi1, "Xi2": xi2, "Xi3": xi3, "Xi4": xi4, "Xi5": xi5, "Psi": psi, "Pi": pi,
              "Theta1": theta1, "Theta2": theta2, "Phi": Phi, "Gamma": gamma}
    return LmiSystem(reg, tuple(constraints), model, params, coeffs, xi, blocks,
                     {"xi_reading": xi_reading, "e6_scale": e6_scale})


# -- overshoot ----------------------------------------------------------------


@dataclass(frozen=True)
class OvershootReport:
    Lambda: float
    H: float
    lambda_min_P: float
    terms: dict

    def to_dict(self):
        return {"Lambda": self.Lambda, "H": self.H, "lambda_min_P": self.lambda_min_P, "terms": dict(self.terms)}


def _lmax(M):
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])


def compute_overshoot(solution, model: NetworkModel, params: AnalysisParams, tol=0.0) -> OvershootReport:
    """Constant ``Lambda`` bounding ``V(0)`` and the envelope factor ``H``.

    ``H = sqrt(Lambda / lambda_min(P))``: the smallest eigenvalue is the one
    that makes ``V(t) >= e^{2kt} c ||z(t)||^2`` true.
    """
    X = dict(solution)
    for name in SYMMETRIC_POSITIVE + DIAGONAL_POSITIVE:
        if name not in X:
            raise NotAWitness(f"valuation lacks {name}")
        if np.linalg.eigvalsh(0.5 * (X[name] + X[name].T))[0] <= tol:
            raise NotAWitness(f"{name} is not positive definite")
    h, k = float(params.h), float(params.k)
    Lm = np.diag(model.L)
    L2 = _lmax(Lm @ Lm)
    grow = h * math.exp(2 * k * h)
    flow = _lmax(model.C.T @ model.C) + _lmax(model.A.T @ model.A) * L2 + _lmax(model.B.T @ model.B) * L2
    terms = {
        "P": _lmax(X["P"]) * (1 + 2 * h * h),
        "D1L": 2 * _lmax(X["D1"] @ Lm),
        "D2L": 2 * _lmax(X["D2"] @ Lm),
        "Q": grow * _lmax(X["Q"]) * (1 + L2),
        "U": grow * (_lmax(X["U1"]) + _lmax(X["U2"]) + _lmax(X["U3"])),
        "ZN": (h**3 / 2 * _lmax(X["Z1"]) + h**3 / 2 * _lmax(X["Z3"])
               + h**3 / 6 * _lmax(X["N1"]) + h**3 / 2 * _lmax(X["N2"])) * flow,
        "M": h * _lmax(X["M1"] + X["M2"]),
        "Z2": h**3 / 2 * _lmax(X["Z2"]),
    }
    lam = float(sum(terms.values()))
    pmin = float(np.linalg.eigvalsh(X["P"])[0])
    return OvershootReport(lam, math.sqrt(lam / pmin), pmin, terms)


# -- interchange file -----------------------------------------------------------


def write_interchange(system: LmiSystem, path):
    """Write the sparse coefficient records of ``system`` as CSV.

    Header lines start with ``#``; records are
    ``constraint,var_id,row,col,value`` for the upper triangle
    (``row <= col``) of each variable's coefficient matrix.
    """
    p = system.params
    with open(path, "w", newline="") as fh:
        fh.write(f"# n={system.model.n} h={float(p.h)!r} mu={float(p.mu)!r} k={float(p.k)!r} xi_delay={float(system.xi_delay)!r}\n")
        fh.write(f"# nvars={system.registry.size} constraints={len(system.constraints)}\n")
        for c in system.constraints:
            fh.write(f"# constraint {c.name} dim={c.expr.dim} sense={c.sense} diagonal={int(c.diagonal)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["constraint", "var_id", "row", "col", "value"])
        for c in system.constraints:
            data = c.expr.data.tocoo()
            d = c.expr.dim
            order = np.lexsort((data.row, data.col))
            for idx in order:
                col, vec_row, val = data.col[idx], data.row[idx], data.data[idx]
                r, cc = vec_row % d, vec_row // d
                if col == 0 or r > cc or val == 0.0:
                    continue
                writer.writerow([c.name, col - 1, r, cc, repr(float(val))])


def read_interchange(path):
    """Parse a file from :func:`write_interchange` into header and dense coefficients.

    Returns ``(header, {constraint: (dim, sense, {var_id: matrix})})``.
    """
    header, dims = {}, {}
    coeffs = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# constraint"):
            _, _, name, dim, sense, diag = line.split()
            dims[name] = (int(dim.split("=")[1]), sense.split("=")[1], diag.split("=")[1] == "1")
        elif line.startswith("#"):
            for tok in line[1:].split():
                key, val = tok.split("=")
                header[key] = float(val)
        else:
            body.append(line)
    for name, (d, sense, _) in dims.items():
        coeffs[name] = (d, sense, {})
    for row in list(csv.DictReader(body)):
        d, _, mats = coeffs[row["constraint"]]
        j = int(row["var_id"])
        M = mats.setdefault(j, np.zeros((d, d)))
        r, c, v = int(row["row"]), int(row["col"]), float(row["value"])
        M[r, c] = v
        M[c, r] = v
    return header, coeffs


def evaluate_blocks(system: LmiSystem, x):
    """Dense values of every named block at valuation ``x``."""
    return {name: expr.evaluate(x) for name, expr in system.blocks.items()}
