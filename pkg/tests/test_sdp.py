import numpy as np
import pytest

from expstab.affine import DecisionRegistry
from expstab.errors import NonHomogeneous
from expstab.lmi import Constraint, LmiSystem, build_theorem_lmis
from expstab.model import EXAMPLE1, AnalysisParams
from expstab.sdp import (
    CERT_TOL,
    MARGIN_THRESHOLD,
    _svec_rows,
    certify,
    check_system,
    classify_margin,
    margin_of,
    solve_feasibility,
    to_conic,
    write_conic,
)
from expstab.affine import AffineSymmetricExpression


@pytest.fixture(scope="module")
def feasible_system():
    return build_theorem_lmis(EXAMPLE1, AnalysisParams(1.0, 0.0, 1.0))


@pytest.fixture(scope="module")
def feasible_report(feasible_system):
    return check_system(feasible_system)


def test_example1_feasible_below_reference_rate(feasible_report, feasible_system):
    rep = feasible_report
    assert rep.status == "feasible"
    assert rep.margin > MARGIN_THRESHOLD
    assert rep.certification.passed
    assert rep.certification.min_slack >= rep.margin - CERT_TOL
    assert set(rep.witness) == set(feasible_system.registry.variables)


def test_example1_infeasible_above_reference_rate():
    rep = check_system(build_theorem_lmis(EXAMPLE1, AnalysisParams(1.0, 0.0, 1.4)))
    assert rep.status == "infeasible"
    assert rep.margin <= MARGIN_THRESHOLD


@pytest.mark.parametrize("solver", ["clarabel", "cvxopt"])
def test_solvers_agree_on_clear_points(solver):
    assert check_system(build_theorem_lmis(EXAMPLE1, AnalysisParams(1.0, 0.0, 0.8)), solver=solver).feasible


def test_conic_problem_size(feasible_system):
    prob = to_conic(feasible_system)
    assert prob.nvars == 106
    assert prob.nreg == 105
    assert prob.A.shape == (1, 106)


def test_empty_registry_rejected():
    reg = DecisionRegistry.from_layout(1, layout=())
    system = LmiSystem(reg, (), EXAMPLE1, AnalysisParams(1, 0, 0.5), None, 0.5)
    with pytest.raises(ValueError):
        to_conic(system)


def test_constant_term_rejected(feasible_system):
    nv = feasible_system.registry.size
    bad = Constraint("bad", AffineSymmetricExpression.constant(np.eye(2), nv), "<0")
    system = LmiSystem(feasible_system.registry, (bad,), EXAMPLE1, feasible_system.params, None, 0.5)
    with pytest.raises(NonHomogeneous):
        to_conic(system)


def test_zero_valuation_has_zero_margin(feasible_system):
    x = np.zeros(feasible_system.registry.size)
    assert margin_of(x, feasible_system) == 0.0
    assert classify_margin(0.0) == "infeasible"
    assert not certify(x, feasible_system).passed


def test_scaling_a_witness_scales_its_margin(feasible_report, feasible_system):
    m = margin_of(feasible_report.x, feasible_system)
    assert margin_of(3.0 * feasible_report.x, feasible_system) == pytest.approx(3.0 * m, rel=1e-9)


def test_identity_gamma_passes_certification(feasible_system):
    reg = feasible_system.registry
    X = {name: np.eye(var.dim) for name, var in reg.variables.items()}
    X["S"] = np.zeros_like(X["S"])
    cert = certify(reg.pack(X), feasible_system)
    gamma = [c for c in cert.checks if c.name == "Gamma"][0]
    assert gamma.slack > 0


def test_large_perturbation_breaks_certification(feasible_report, feasible_system):
    rng = np.random.default_rng(11)
    x = feasible_report.x + 50.0 * np.abs(feasible_report.x).max() * rng.normal(size=feasible_report.x.size)
    assert not certify(x, feasible_system).passed


def test_deterministic(feasible_system, feasible_report):
    again = check_system(feasible_system)
    assert again.status == feasible_report.status
    assert again.margin == feasible_report.margin
    np.testing.assert_array_equal(again.x, feasible_report.x)


def test_unknown_solver_rejected(feasible_system):
    with pytest.raises(ValueError):
        solve_feasibility(to_conic(feasible_system), feasible_system, solver="mosek")


def test_svec_layout_matches_inner_product():
    # svec(A).svec(B) must equal trace(AB) for the scaled triangle layout
    rng = np.random.default_rng(0)
    d = 4
    A, B = (M + M.T for M in rng.normal(size=(2, d, d)))
    rows, wts = _svec_rows(d)
    sa = wts * A.reshape(-1, order="F")[rows]
    sb = wts * B.reshape(-1, order="F")[rows]
    assert sa @ sb == pytest.approx(np.trace(A @ B), rel=1e-12)
    assert len(rows) == d * (d + 1) // 2


def test_write_conic(tmp_path, feasible_system):
    path = tmp_path / "conic.txt"
    prob = to_conic(feasible_system)
    write_conic(prob, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# nvars=106 margin_var=105"
    records = [ln.split(",") for ln in lines if not ln.startswith("#")][1:]
    eq = [r for r in records if r[0] == "E"]
    assert len(eq) == prob.A.nnz
    # rebuild the first cone block's margin column: +I for "<0" constraints
    d = prob.block_dims[0]
    M = np.zeros((d, d))
    for r in records:
        if r[0] == "0" and int(r[1]) == 105:
            M[int(r[2]), int(r[3])] = float(r[4])
    np.testing.assert_array_equal(M, np.eye(d))
