import math

import numpy as np
import pytest
from dense_reference import dense_blocks

from expstab.affine import AffineSymmetricExpression, DecisionRegistry
from expstab.errors import DimensionMismatch, IndexOutOfRange, InvalidParams, NotAWitness
from expstab.inequality import Interval, compute_coefficients
from expstab.lmi import (
    DIAGONAL_POSITIVE,
    SYMMETRIC_POSITIVE,
    build_es,
    build_theorem_lmis,
    compute_overshoot,
    declare_decision_variables,
    evaluate_blocks,
    read_interchange,
    selector,
    step_row_coefficients,
    write_interchange,
)
from expstab.model import EXAMPLE1, EXAMPLE2, AnalysisParams, NetworkModel, decision_count

BLOCKS = ("Xi1", "Xi2", "Xi3", "Xi4", "Xi5", "Psi", "Pi", "Theta1", "Theta2", "Gamma")


@pytest.fixture(scope="module")
def ex1_system():
    return build_theorem_lmis(EXAMPLE1, AnalysisParams(1.0, 0.5, 0.8))


def random_valuation(registry, rng):
    return rng.normal(size=registry.size)


def random_model(n, rng):
    return NetworkModel(rng.normal(size=(n, n)), rng.normal(size=(n, n)), rng.uniform(1.0, 3.0, n),
                        rng.uniform(0.2, 1.5, n))


# -- selector and e_s ----------------------------------------------------------


def test_selector_first_block():
    E = selector(1, 2)
    assert E.shape == (24, 2)
    np.testing.assert_array_equal(E[:2], np.eye(2))
    assert not E[2:].any()


@pytest.mark.parametrize("n", [1, 3])
def test_selectors_are_orthonormal_and_complete(n):
    total = np.zeros((12 * n, 12 * n))
    for i in range(1, 13):
        for j in range(1, 13):
            expect = np.eye(n) if i == j else np.zeros((n, n))
            np.testing.assert_array_equal(selector(i, n).T @ selector(j, n), expect)
        total += selector(i, n) @ selector(i, n).T
    np.testing.assert_array_equal(total, np.eye(12 * n))


@pytest.mark.parametrize("i", [0, 13, -1])
def test_selector_range(i):
    with pytest.raises(IndexOutOfRange):
        selector(i, 2)


def test_es_blocks_example1():
    es = build_es(EXAMPLE1)
    blocks = [es[2 * i:2 * i + 2].T for i in range(12)]
    np.testing.assert_array_equal(blocks[0], -np.diag([2.0, 3.5]))
    for i in (1, 2, 5, 6, 7, 8, 9, 10, 11):
        assert not blocks[i].any()
    np.testing.assert_array_equal(es.T @ selector(4, 2), EXAMPLE1.A)
    np.testing.assert_array_equal(es.T @ selector(5, 2), EXAMPLE1.B)


def test_es_reproduces_the_vector_field():
    rng = np.random.default_rng(3)
    z, fz, fzd = rng.normal(size=(3, 2))
    eta = np.zeros(24)
    eta[0:2], eta[6:8], eta[8:10] = z, fz, fzd
    expect = -EXAMPLE1.C @ z + EXAMPLE1.A @ fz + EXAMPLE1.B @ fzd
    np.testing.assert_allclose(build_es(EXAMPLE1).T @ eta, expect)


# -- decision variables --------------------------------------------------------


@pytest.mark.parametrize("n", range(1, 9))
def test_decision_count_formula(n):
    assert declare_decision_variables(n).size == decision_count(n) == 20.5 * n * n + 11.5 * n


def test_decision_count_examples():
    assert declare_decision_variables(1).size == 32
    assert declare_decision_variables(2).size == 105
    assert declare_decision_variables(4).size == 374


def test_decision_count_by_matrix_triangles():
    n = 3
    tri = lambda d: d * (d + 1) // 2
    expect = tri(3 * n) + tri(2 * n) + 10 * tri(n) + 4 * n + (3 * n) ** 2
    assert declare_decision_variables(n).size == expect


def test_registry_pack_unpack_round_trip():
    reg = declare_decision_variables(2)
    x = np.random.default_rng(0).normal(size=reg.size)
    X = reg.unpack(x)
    np.testing.assert_array_equal(reg.pack(X), x)
    for name in SYMMETRIC_POSITIVE:
        np.testing.assert_array_equal(X[name], X[name].T)
    for name in DIAGONAL_POSITIVE:
        np.testing.assert_array_equal(X[name], np.diag(np.diag(X[name])))
    assert reg.describe(reg["S"].offset) == ("S", 0, 0)


def test_registry_rejects_bad_valuation():
    reg = declare_decision_variables(1)
    with pytest.raises(DimensionMismatch):
        reg.unpack(np.zeros(reg.size + 1))
    with pytest.raises(ValueError):
        DecisionRegistry.from_layout(0)


# -- affine expressions --------------------------------------------------------


def test_affine_product_matches_dense():
    reg = declare_decision_variables(2)
    rng = np.random.default_rng(1)
    x = rng.normal(size=reg.size)
    X = reg.unpack(x)
    Lm, Rm = rng.normal(size=(2, 5, 6))
    expr = AffineSymmetricExpression.product(reg, Lm, "P", Rm)
    np.testing.assert_allclose(expr.evaluate(x), Lm @ X["P"] @ Rm.T, atol=1e-12)
    sym = AffineSymmetricExpression.sym_product(reg, Lm, "S", Rm, scale=2.0)
    np.testing.assert_allclose(sym.evaluate(x), 2 * (Lm @ X["S"] @ Rm.T + Rm @ X["S"].T @ Lm.T), atol=1e-12)
    V = rng.normal(size=(5, 3))
    np.testing.assert_allclose(sym.congruence(V).evaluate(x), V.T @ sym.evaluate(x) @ V, atol=1e-11)


def test_affine_algebra_and_inspection():
    reg = declare_decision_variables(1)
    e = AffineSymmetricExpression.product(reg, np.ones((2, 1)), "U1")
    c = AffineSymmetricExpression.constant(np.eye(2), reg.size)
    s = 2 * e - c
    assert not s.is_homogeneous() and e.is_homogeneous()
    np.testing.assert_array_equal(s.constant_term, -np.eye(2))
    j = reg["U1"].offset
    np.testing.assert_array_equal(s.coefficient(j), 2 * np.ones((2, 2)))
    assert s.variables() == [j]
    with pytest.raises(DimensionMismatch):
        e + AffineSymmetricExpression.zeros(3, reg.size)


# -- the theorem system --------------------------------------------------------


def test_system_shape_and_names(ex1_system):
    names = ex1_system.names
    assert names[:3] == ["Phi+Theta1", "Phi+Theta2", "Gamma"]
    assert set(SYMMETRIC_POSITIVE + DIAGONAL_POSITIVE) <= set(names)
    assert ex1_system["Phi+Theta1"].expr.dim == 24
    assert ex1_system["Gamma"].expr.dim == 12
    assert ex1_system["Gamma"].sense == ">0" and ex1_system["Phi+Theta1"].sense == "<0"
    assert ex1_system["D1"].diagonal


def test_system_homogeneous_and_symmetric(ex1_system):
    for con in ex1_system.constraints:
        assert con.expr.is_homogeneous(), con.name
        assert con.expr.asymmetry() < 1e-12, con.name


def test_homogeneity_of_evaluation(ex1_system):
    x = np.random.default_rng(2).normal(size=ex1_system.registry.size)
    for con in ex1_system.constraints[:3]:
        np.testing.assert_allclose(con.expr.evaluate(3.7 * x), 3.7 * con.expr.evaluate(x), rtol=1e-12, atol=1e-12)


def test_vertex_property(ex1_system):
    rng = np.random.default_rng(4)
    x = rng.normal(size=ex1_system.registry.size)
    b = evaluate_blocks(ex1_system, x)
    v1 = ex1_system["Phi+Theta1"].expr.evaluate(x)
    v2 = ex1_system["Phi+Theta2"].expr.evaluate(x)
    for alpha in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(alpha * v1 + (1 - alpha) * v2,
                                   b["Phi"] + alpha * b["Theta1"] + (1 - alpha) * b["Theta2"], atol=1e-10)


def test_identity_valuation_gamma_is_positive():
    system = build_theorem_lmis(EXAMPLE1, AnalysisParams(1.0, 0.0, 0.5))
    reg = system.registry
    X = {name: np.eye(var.dim) for name, var in reg.variables.items()}
    X["S"] = np.zeros_like(X["S"])
    G = system["Gamma"].expr.evaluate(reg.pack(X))
    assert np.linalg.eigvalsh(G)[0] > 0


def _dual_path(model, params, rng, e6_scale="derived", xi_reading="mapped"):
    coeffs = compute_coefficients(Interval(0.0, params.h, params.k))
    system = build_theorem_lmis(model, params, coeffs, xi_reading=xi_reading, e6_scale=e6_scale)
    x = random_valuation(system.registry, rng)
    got = evaluate_blocks(system, x)
    ref = dense_blocks(model, params, coeffs, system.registry.unpack(x), system.xi_delay, e6_scale=e6_scale)
    worst = 0.0
    for name in BLOCKS:
        scale = max(np.abs(ref[name]).max(), 1e-300)
        worst = max(worst, np.abs(got[name] - ref[name]).max() / scale)
    return worst


@pytest.mark.parametrize("n", [2, 3])
def test_dual_path_random_models(n):
    rng = np.random.default_rng(100 + n)
    for trial in range(10):
        model = random_model(n, rng)
        params = AnalysisParams(float(rng.uniform(0.2, 5.0)), float(rng.uniform(0, 0.95)),
                                float(rng.uniform(1e-6, 0.9 * model.c_min)))
        assert _dual_path(model, params, rng) < 1e-10


@pytest.mark.parametrize("e6_scale", ["derived", "printed"])
@pytest.mark.parametrize("xi_reading", ["mapped", "direct"])
def test_dual_path_variants(e6_scale, xi_reading):
    rng = np.random.default_rng(7)
    assert _dual_path(EXAMPLE2, AnalysisParams(2.3, 0.5, 0.2), rng, e6_scale, xi_reading) < 1e-10


def test_xi_mapping():
    params = AnalysisParams(2.0, 0.0, 0.7)
    c = compute_coefficients(Interval(0.0, 2.0, 0.7))
    assert build_theorem_lmis(EXAMPLE1, params, c).xi_delay == pytest.approx(2.0 - c.split)
    assert build_theorem_lmis(EXAMPLE1, params, c, xi_reading="direct").xi_delay == pytest.approx(c.split)


def test_step_row_variants_agree_at_unit_delay():
    c = compute_coefficients(Interval(0.0, 1.0, 0.4))
    assert step_row_coefficients(1.0, c, "derived") == pytest.approx(step_row_coefficients(1.0, c, "printed"))
    c = compute_coefficients(Interval(0.0, 3.0, 0.4))
    assert step_row_coefficients(3.0, c, "derived")[2] == pytest.approx(3.0 * step_row_coefficients(3.0, c, "printed")[2])


def test_invalid_params_rejected():
    with pytest.raises(InvalidParams):
        build_theorem_lmis(EXAMPLE1, AnalysisParams(1.0, 0.0, 2.0))
    with pytest.raises(InvalidParams):
        build_theorem_lmis(EXAMPLE1, AnalysisParams(1.0, 1.0, 0.5))
    with pytest.raises(InvalidParams):
        build_theorem_lmis(EXAMPLE1, AnalysisParams(-1.0, 0.0, 0.5))


def test_interchange_round_trip(tmp_path, ex1_system):
    path = tmp_path / "system.csv"
    write_interchange(ex1_system, path)
    header, coeffs = read_interchange(path)
    assert header["n"] == 2 and header["nvars"] == 105
    assert header["xi_delay"] == pytest.approx(ex1_system.xi_delay)
    for con in ex1_system.constraints:
        d, sense, mats = coeffs[con.name]
        assert d == con.expr.dim and sense == con.sense
        ref = con.expr.coefficients()
        assert set(mats) == set(ref)
        for j, M in ref.items():
            np.testing.assert_allclose(mats[j], M, rtol=1e-15, atol=0)


# -- overshoot -----------------------------------------------------------------


def _identity_witness(n):
    reg = declare_decision_variables(n)
    return {name: np.eye(var.dim) for name, var in reg.variables.items()}


def test_overshoot_hand_evaluation():
    model = NetworkModel(np.zeros((1, 1)), np.zeros((1, 1)), [1.0], [1.0])
    k = 0.3
    rep = compute_overshoot(_identity_witness(1), model, AnalysisParams(1.0, 0.0, k))
    # P:3, D1L:2, D2L:2, Q:2e^{2k}, U:3e^{2k}, Z/N:5/3, M1+M2:2, Z2:1/2
    expect = 3 + 2 + 2 + 2 * math.exp(2 * k) + 3 * math.exp(2 * k) + 5 / 3 + 2 + 0.5
    assert rep.Lambda == pytest.approx(expect, rel=1e-14)
    assert rep.H == pytest.approx(math.sqrt(expect), rel=1e-14)
    assert rep.lambda_min_P == 1.0
    assert rep.H >= 1


def test_overshoot_scale_invariance():
    rng = np.random.default_rng(5)
    W = {}
    for name, M in _identity_witness(2).items():
        G = rng.normal(size=M.shape)
        W[name] = G @ G.T + M if name not in DIAGONAL_POSITIVE else np.diag(rng.uniform(0.5, 2, M.shape[0]))
    params = AnalysisParams(1.5, 0.2, 0.4)
    a = compute_overshoot(W, EXAMPLE1, params)
    b = compute_overshoot({k: 2.5 * v for k, v in W.items()}, EXAMPLE1, params)
    assert b.Lambda == pytest.approx(2.5 * a.Lambda, rel=1e-12)
    assert b.H == pytest.approx(a.H, rel=1e-12)


def test_overshoot_rejects_non_witness():
    W = _identity_witness(2)
    W["Z2"] = -W["Z2"]
    with pytest.raises(NotAWitness):
        compute_overshoot(W, EXAMPLE1, AnalysisParams(1.0, 0.0, 0.5))
    del W["Z2"]
    with pytest.raises(NotAWitness):
        compute_overshoot(W, EXAMPLE1, AnalysisParams(1.0, 0.0, 0.5))
