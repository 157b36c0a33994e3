"""Strict LMI feasibility via margin maximisation, plus independent certification.

Every strict condition is relaxed by a common margin ``t``:
``M(x) < 0`` becomes ``M(x) + t I <= 0`` and ``M(x) > 0`` becomes
``M(x) - t I >= 0``.  The scale of a homogeneous system is pinned by
requiring the traces of all definite decision matrices to sum to one, and
``t`` is maximised with an interior-point cone solver (Clarabel by default,
CVXOPT as an alternative).  A verdict of *feasible*
is only issued once the returned point has been re-evaluated densely and
its eigenvalues checked with LAPACK.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NonHomogeneous, NumericalFailure
from .lmi import LmiSystem

log = logging.getLogger(__name__)

MARGIN_THRESHOLD = 1e-7
CERT_TOL = 1e-6
# largest primal-dual objective gap for which a reduced-accuracy solve still
# decides infeasibility through its dual bound
DUAL_GAP_TOL = 1e-8
CVXOPT_DEFAULTS = {"abstol": 1e-10, "reltol": 1e-9, "feastol": 1e-10, "maxiters": 200}
CLARABEL_DEFAULTS = {"tol_feas": 1e-10, "tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10, "max_iter": 300}
SOLVERS = ("clarabel", "cvxopt")


@dataclass
class ConicProblem:
    """Standard conic data ``min c^T x  s.t.  G_l x <= h_l,  G_k x + s_k = h_k (s_k psd),  A x = b``.

    The last variable is the margin ``t``; the first ``nreg`` are the
    registry scalars.
    """

    nreg: int
    c: np.ndarray
    Gl: sp.csc_matrix
    hl: np.ndarray
    Gs: list
    hs: list
    names: list
    A: sp.csc_matrix
    b: np.ndarray
    linear_names: list = field(default_factory=list)

    @property
    def nvars(self):
        return self.nreg + 1

    @property
    def block_dims(self):
        return [int(round(np.sqrt(G.shape[0]))) for G in self.Gs]


def normalization_row(system: LmiSystem):
    """Row vector whose product with ``x`` is the summed trace of definite matrices."""
    reg = system.registry
    row = np.zeros(reg.size)
    for con in system.constraints:
        if con.name not in reg.variables:
            continue
        var = reg[con.name]
        for j, (r, c) in enumerate(var.entries):
            if r == c:
                row[var.offset + j] = 1.0
    return row


def to_conic(system: LmiSystem, normalize=True) -> ConicProblem:
    if system.registry.size == 0:
        raise ValueError("system has no decision variables")
    nreg = system.registry.size
    Gs, hs, names = [], [], []
    lin_rows, lin_names = [], []
    for con in system.constraints:
        expr = con.expr
        if not expr.is_homogeneous():
            raise NonHomogeneous(f"constraint {con.name} has a constant term")
        d = expr.dim
        coef = expr.data[:, 1:]
        eye = sp.csc_matrix(np.eye(d).reshape(-1, order="F")[:, None])
        if con.diagonal:
            # entrywise: -x_ii + t <= 0
            diag_rows = [i + i * d for i in range(d)]
            block = sp.hstack([-coef[diag_rows, :], sp.csc_matrix(np.ones((d, 1)))])
            lin_rows.append(block)
            lin_names.extend(f"{con.name}[{i}]" for i in range(d))
            continue
        if con.sense == "<0":
            G = sp.hstack([coef, eye])
        elif con.sense == ">0":
            G = sp.hstack([-coef, eye])
        else:
            raise ValueError(f"unknown sense {con.sense!r}")
        Gs.append(sp.csc_matrix(G))
        hs.append(np.zeros(d * d))
        names.append(con.name)
    Gl = sp.csc_matrix(sp.vstack(lin_rows)) if lin_rows else sp.csc_matrix((0, nreg + 1))
    c = np.zeros(nreg + 1)
    c[-1] = -1.0
    if normalize:
        A = sp.csc_matrix(np.concatenate([normalization_row(system), [0.0]])[None, :])
        b = np.array([1.0])
    else:
        A = sp.csc_matrix((0, nreg + 1))
        b = np.zeros(0)
    return ConicProblem(nreg, c, Gl, np.zeros(Gl.shape[0]), Gs, hs, names, A, b, lin_names)


def write_conic(problem: ConicProblem, path):
    """Dump ``problem`` as text: ``#`` header lines then
    ``constraint_id,var_id,row,col,value`` records.

    Constraint ids ``0..len(Gs)-1`` are the cone blocks (row/col inside the
    block, upper triangle); ``L`` is the linear block (row = inequality
    index, col = 0); ``E`` is the normalisation row.
    """
    with open(path, "w") as fh:
        fh.write(f"# nvars={problem.nvars} margin_var={problem.nvars - 1}\n")
        fh.write("# blocks=" + ",".join(str(d) for d in problem.block_dims) + "\n")
        fh.write("# block_names=" + ",".join(problem.names) + "\n")
        fh.write(f"# linear={problem.Gl.shape[0]} equalities={problem.A.shape[0]}\n")
        fh.write("constraint_id,var_id,row,col,value\n")
        for bid, (G, d) in enumerate(zip(problem.Gs, problem.block_dims)):
            coo = G.tocoo()
            for idx in np.lexsort((coo.row, coo.col)):
                r, c = coo.row[idx] % d, coo.row[idx] // d
                if r <= c:
                    fh.write(f"{bid},{coo.col[idx]},{r},{c},{float(coo.data[idx])!r}\n")
        coo = problem.Gl.tocoo()
        for idx in np.lexsort((coo.col, coo.row)):
            fh.write(f"L,{coo.col[idx]},{coo.row[idx]},0,{float(coo.data[idx])!r}\n")
        coo = problem.A.tocoo()
        for idx in np.lexsort((coo.col, coo.row)):
            fh.write(f"E,{coo.col[idx]},{coo.row[idx]},0,{float(coo.data[idx])!r}\n")


# -- certification ----------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    sense: str
    extreme: float  # lambda_max for "<0", lambda_min for ">0"
    slack: float

    def to_dict(self):
        return {"name": self.name, "sense": self.sense, "extreme_eigenvalue": self.extreme, "slack": self.slack}


@dataclass(frozen=True)
class Certification:
    checks: tuple
    passed: bool
    min_slack: float
    cert_tol: float

    def to_dict(self):
        return {
            "passed": self.passed,
            "min_slack": self.min_slack,
            "cert_tol": self.cert_tol,
            "constraints": [c.to_dict() for c in self.checks],
        }


def certify(x, system: LmiSystem, cert_tol=CERT_TOL, margin=None) -> Certification:
    """Dense eigenvalue check of every constraint at registry valuation ``x``.

    Passes when every slack is strictly positive and, if ``margin`` is
    given, no slack falls more than ``cert_tol`` below it.
    """
    checks = []
    for con in system.constraints:
        M = con.expr.evaluate(x)
        M = 0.5 * (M + M.T)
        if con.diagonal:
            vals = np.sort(np.diag(M))
        else:
            vals = np.linalg.eigvalsh(M)
        if con.sense == "<0":
            extreme, slack = float(vals[-1]), float(-vals[-1])
        else:
            extreme, slack = float(vals[0]), float(vals[0])
        checks.append(ConstraintCheck(con.name, con.sense, extreme, slack))
    min_slack = min(c.slack for c in checks)
    passed = min_slack > 0
    if margin is not None:
        passed = passed and min_slack >= margin - cert_tol
    return Certification(tuple(checks), bool(passed), float(min_slack), cert_tol)


# -- solve ------------------------------------------------------------------------


@dataclass
class FeasibilityReport:
    status: str  # feasible | infeasible | numerical-failure
    margin: float
    x: np.ndarray | None
    witness: dict | None
    certification: Certification | None
    solver_status: str = ""
    iterations: int = 0

    @property
    def feasible(self):
        return self.status == "feasible"

    def to_dict(self, include_witness=False):
        out = {
            "status": self.status,
            "margin": self.margin,
            "solver_status": self.solver_status,
            "iterations": self.iterations,
            "certification": self.certification.to_dict() if self.certification else None,
        }
        if include_witness and self.witness is not None:
            out["witness"] = {k: v.tolist() for k, v in self.witness.items()}
        return out


def _cvx(M):
    from cvxopt import spmatrix

    M = sp.coo_matrix(M)
    return spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), M.shape, "d")


def _run_cvxopt(problem: ConicProblem, tol):
    from cvxopt import matrix, solvers

    options = dict(CVXOPT_DEFAULTS)
    if tol is not None:
        options.update(abstol=tol, feastol=tol, reltol=10 * tol)
    kwargs = dict(
        c=matrix(problem.c),
        Gs=[_cvx(G) for G in problem.Gs],
        hs=[matrix(h.reshape(int(np.sqrt(h.size)), -1, order="F")) for h in problem.hs],
    )
    if problem.Gl.shape[0]:
        kwargs["Gl"] = _cvx(problem.Gl)
        kwargs["hl"] = matrix(problem.hl)
    if problem.A.shape[0]:
        kwargs["A"] = _cvx(problem.A)
        kwargs["b"] = matrix(problem.b)
    saved = dict(solvers.options)
    try:
        solvers.options.clear()
        solvers.options.update({"show_progress": False, **options})
        sol = solvers.sdp(**kwargs)
    finally:
        solvers.options.clear()
        solvers.options.update(saved)
    x = None if sol["x"] is None else np.array(sol["x"]).ravel()
    dual = sol.get("dual objective")
    return x, sol["status"], int(sol.get("iterations", 0) or 0), None if dual is None else -float(dual)


def _svec_rows(d):
    """Upper-triangle, column-major ``vec`` rows and their sqrt(2) weights."""
    rows, wts = [], []
    for j in range(d):
        for i in range(j + 1):
            rows.append(i + j * d)
            wts.append(1.0 if i == j else np.sqrt(2.0))
    return np.array(rows), np.array(wts)


def _run_clarabel(problem: ConicProblem, tol):
    import clarabel

    blocks, rhs, cones = [], [], []
    if problem.A.shape[0]:
        blocks.append(problem.A)
        rhs.append(problem.b)
        cones.append(clarabel.ZeroConeT(problem.A.shape[0]))
    if problem.Gl.shape[0]:
        blocks.append(problem.Gl)
        rhs.append(problem.hl)
        cones.append(clarabel.NonnegativeConeT(problem.Gl.shape[0]))
    for G, h, d in zip(problem.Gs, problem.hs, problem.block_dims):
        rows, wts = _svec_rows(d)
        blocks.append(sp.diags(wts) @ G[rows, :])
        rhs.append(wts * h[rows])
        cones.append(clarabel.PSDTriangleConeT(d))
    A = sp.csc_matrix(sp.vstack(blocks))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    for key, val in CLARABEL_DEFAULTS.items():
        setattr(settings, key, val)
    if tol is not None:
        settings.tol_feas = settings.tol_gap_abs = settings.tol_gap_rel = tol
    solver = clarabel.DefaultSolver(sp.csc_matrix((problem.nvars, problem.nvars)), problem.c,
                                    A, np.concatenate(rhs), cones, settings)
    res = solver.solve()
    status = str(res.status)
    x = np.array(res.x, dtype=float)
    ok = "optimal" if status == "Solved" else status
    dual = float(res.obj_val_dual)
    return ((x if x.size == problem.nvars and np.all(np.isfinite(x)) else None), ok, int(res.iterations),
            -dual if math.isfinite(dual) else None)


def solve_feasibility(problem: ConicProblem, system: LmiSystem, solver_tol=None, solver="clarabel",
                      margin_threshold=MARGIN_THRESHOLD, cert_tol=CERT_TOL) -> FeasibilityReport:
    """Maximise the margin and classify ``system``.

    ``solver_tol`` overrides the feasibility/gap tolerances of the cone
    solver.  A solve that stops short of full accuracy is still decided
    when its point passes dense certification (feasible) or when the dual
    bound on the margin is below threshold with a negligible duality gap
    (infeasible); otherwise the status is ``numerical-failure``.
    """
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    run = _run_clarabel if solver == "clarabel" else _run_cvxopt
    try:
        z, status, iters, t_upper = run(problem, solver_tol)
    except (ArithmeticError, ValueError) as exc:
        log.debug("cone solver raised %s", exc)
        return FeasibilityReport("numerical-failure", float("nan"), None, None, None, f"error: {exc}")

    if z is None:
        return FeasibilityReport("numerical-failure", float("nan"), None, None, None, status, iters)
    x, t = z[:-1], float(z[-1])
    cert = certify(x, system, cert_tol=cert_tol, margin=t if t > 0 else None)
    witness = system.registry.unpack(x)
    if status == "optimal":
        if t > margin_threshold and cert.passed:
            return FeasibilityReport("feasible", t, x, witness, cert, status, iters)
        if t > margin_threshold:
            # solver claims a margin that dense evaluation cannot confirm
            return FeasibilityReport("numerical-failure", t, x, witness, cert, status, iters)
        return FeasibilityReport("infeasible", t, x, witness, cert, status, iters)
    if cert.passed and cert.min_slack > margin_threshold:
        return FeasibilityReport("feasible", cert.min_slack, x, witness, cert, status, iters)
    # maximising t: the dual objective bounds the optimal margin from above
    if t_upper is not None and t_upper < -margin_threshold and abs(t_upper - t) <= DUAL_GAP_TOL:
        return FeasibilityReport("infeasible", t, x, witness, cert, status, iters)
    return FeasibilityReport("numerical-failure", t, x, witness, cert, status, iters)


def check_system(system: LmiSystem, **kwargs) -> FeasibilityReport:
    """``to_conic`` followed by ``solve_feasibility``."""
    return solve_feasibility(to_conic(system), system, **kwargs)


def margin_of(x, system: LmiSystem):
    """Common margin achieved by a fixed valuation: the smallest certified slack."""
    return certify(x, system).min_slack


def classify_margin(margin, threshold=MARGIN_THRESHOLD):
    return "feasible" if margin > threshold else "infeasible"


__all__ = [
    "ConicProblem", "FeasibilityReport", "Certification", "NumericalFailure",
    "to_conic", "solve_feasibility", "certify", "check_system", "write_conic", "margin_of", "classify_margin",
]
