"""Weighted integral inequality: basis constants and the bounds built on them.

The weight on ``[a, b]`` is ``exp(-2k(u - b))``.  Two orthogonal polynomials
``p1(u) = (u-a) + c1`` and ``p2(u) = (u-a)^2 + c2 (u-a) + c3`` are paired with
a step function ``p3 = 1 + c4 * chi_[a, split]``, where ``split`` is the
interior point at which the weighted integral of ``p2`` returns to zero.

Constants are evaluated from the exact closed forms when ``2k(b-a)`` is not
small.  Below that the closed forms cancel catastrophically (``q2`` loses
every digit near ``k = 1e-4``), so the weighted moments are summed from their
Taylor series in ``k`` and the constants recovered by Gram-Schmidt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import DimensionMismatch, NonBracketedRoot, OrthogonalityViolation, ToleranceNotMet
from .quadrature import Grid, SampledPath

K_FLOOR = 1e-9
# below this value of 2k(b-a) the series path is used
SERIES_SWITCH = 0.5
_SERIES_TERMS = 30


@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    k: float

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"interval needs b > a (a={self.a}, b={self.b})")
        if self.k < 0:
            raise ValueError(f"rate k must be non-negative, got {self.k}")

    @property
    def length(self):
        return self.b - self.a

    def weight(self, u):
        return np.exp(-2.0 * self.k * (np.asarray(u, dtype=float) - self.b))


@dataclass(frozen=True)
class WeightedBasisCoefficients:
    w: float
    c1: float
    c2: float
    c3: float
    c4: float
    q0: float
    q1: float
    q2: float
    q3: float
    q13: float
    split: float

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class MomentVector:
    """Integrals of ``z`` needed by the bounds.

    ``m1`` and ``m2`` are the once- and twice-iterated tail integrals;
    ``m_split`` integrates ``z`` over ``[a, split]`` only.
    """

    m0: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    m_split: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(v) for v in (self.m0, self.m1, self.m2, self.m_split)}
        if len(shapes) != 1:
            raise DimensionMismatch(f"moment vectors disagree in shape: {sorted(shapes)}")

    @property
    def n(self):
        return np.size(self.m0)

    @classmethod
    def from_samples(cls, grid: Grid, z, split):
        z = np.asarray(z, dtype=float).reshape(grid.size, -1)
        return cls(grid.integrate(z), grid.iterated(z, 1), grid.iterated(z, 2), grid.integrate(z, upto=split))


# -- weighted moments -------------------------------------------------------


def _partial_moments(beta, length, s, order=4):
    """``M_j = int_0^s x^j exp(beta (length - x)) dx`` for ``j = 0..order``."""
    bs = beta * s
    scale = math.exp(beta * length)
    out = np.empty(order + 1)
    if bs < SERIES_SWITCH:
        m = np.arange(_SERIES_TERMS)
        sign_fact = np.array([(-bs) ** i / math.factorial(i) for i in m])
        for j in range(order + 1):
            out[j] = scale * s ** (j + 1) * np.sum(sign_fact / (j + m + 1))
        return out
    # upward recursion int_0^s x^j e^{-beta x} = (j I_{j-1} - s^j e^{-beta s}) / beta
    tail = math.exp(-bs)
    prev = -math.expm1(-bs) / beta
    out[0] = prev
    for j in range(1, order + 1):
        prev = (j * prev - s**j * tail) / beta
        out[j] = prev
    return scale * out


def _split_function(beta, length, c2, c3, s):
    m = _partial_moments(beta, length, s, order=2)
    return m[2] + c2 * m[1] + c3 * m[0]


def _closed_form(L, k):
    w = math.exp(2.0 * k * L)
    wm1 = math.expm1(2.0 * k * L)
    c1 = L / wm1 - 1.0 / (2.0 * k)
    num = wm1 / (2 * k**3) - L**3 - L**2 / k - L / (2 * k**2) - L**3 / wm1 - L**2 / (k * wm1)
    den = wm1 / (4 * k**2) - L**2 - L**2 / wm1
    c2 = -num / den
    c3 = c1 * c2 - (1.0 / (2 * k**2) - L**2 / wm1 - L / (k * wm1))
    q0 = wm1 / (2 * k)
    q1 = wm1 / (8 * k**3) - L**2 / (2 * k) - L**2 / (2 * k * wm1)
    q2 = (
        3 * wm1 / (4 * k**5)
        - L**4 / (2 * k)
        - L**3 / k**2
        - 3 * L**2 / (2 * k**3)
        - 3 * L / (2 * k**4)
        - c2**2 * q1
        - (c3 - c1 * c2) ** 2 * q0
    )
    return w, c1, c2, c3, q0, q1, q2


def _gram_schmidt(L, k):
    mu = _partial_moments(2.0 * k, L, L)
    q0 = mu[0]
    c1 = -mu[1] / mu[0]
    q1 = mu[2] + 2 * c1 * mu[1] + c1**2 * mu[0]
    # <x^2, p1> / <p1, p1>
    c2 = -(mu[3] + c1 * mu[2]) / q1
    c3 = c1 * c2 - mu[2] / mu[0]
    # <p2, p2> with p2 = x^2 + c2 x + c3
    q2 = (
        mu[4]
        + 2 * c2 * mu[3]
        + (c2**2 + 2 * c3) * mu[2]
        + 2 * c2 * c3 * mu[1]
        + c3**2 * mu[0]
    )
    return math.exp(2.0 * k * L), c1, c2, c3, q0, q1, q2


def orthogonality_residuals(iv: Interval, coeffs: WeightedBasisCoefficients):
    """Normalised weighted inner products that must vanish.

    Returns ``<1,p1>``, ``<1,p2>``, ``<p1,p2>`` and ``int_a^split p2 w``,
    each divided by the matching product of weighted norms so the values are
    scale free even when ``exp(2k(b-a))`` is huge.
    """
    L, beta = iv.length, 2.0 * iv.k
    mu = _partial_moments(beta, L, L, order=4)
    c1, c2, c3 = coeffs.c1, coeffs.c2, coeffs.c3
    q0, q1, q2 = mu[0], coeffs.q1, coeffs.q2
    r01 = (mu[1] + c1 * mu[0]) / math.sqrt(q0 * q1)
    r02 = (mu[2] + c2 * mu[1] + c3 * mu[0]) / math.sqrt(q0 * q2)
    r12 = (mu[3] + (c1 + c2) * mu[2] + (c3 + c1 * c2) * mu[1] + c1 * c3 * mu[0]) / math.sqrt(q1 * q2)
    rs = _split_function(beta, L, c2, c3, coeffs.split - iv.a) / math.sqrt(q0 * q2)
    return np.array([r01, r02, r12, rs])


def compute_coefficients(iv: Interval, quad_tol=1e-9, root_tol=None) -> WeightedBasisCoefficients:
    """Basis constants and split point for the weight ``exp(-2k(u-b))`` on ``[a, b]``."""
    if iv.k < K_FLOOR:
        raise ValueError(f"k={iv.k} is below the supported floor {K_FLOOR}")
    L, k = iv.length, iv.k
    beta = 2.0 * k
    if root_tol is None:
        root_tol = 1e-12 * L
    if beta * L < SERIES_SWITCH:
        w, c1, c2, c3, q0, q1, q2 = _gram_schmidt(L, k)
    else:
        w, c1, c2, c3, q0, q1, q2 = _closed_form(L, k)

    disc = c2 * c2 - 4.0 * c3
    if disc <= 0:
        raise NonBracketedRoot(f"p2 has no real roots (discriminant {disc:.3e})")
    sq = math.sqrt(disc)
    r1, r2 = (-c2 - sq) / 2.0, (-c2 + sq) / 2.0
    if not 0.0 < r1 < r2 < L:
        raise NonBracketedRoot(f"roots of p2 ({r1:.6g}, {r2:.6g}) not inside (0, {L:.6g})")

    lo, hi = r1, r2
    f_lo = _split_function(beta, L, c2, c3, lo)
    f_hi = _split_function(beta, L, c2, c3, hi)
    if not (f_lo > 0 > f_hi):
        raise NonBracketedRoot(f"split function does not change sign: F(r1)={f_lo:.3e}, F(r2)={f_hi:.3e}")
    while hi - lo > root_tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _split_function(beta, L, c2, c3, mid) > 0:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)

    # <1, chi> and <p1, chi> over [a, a + s]
    part = _partial_moments(beta, L, s, order=1)
    one_chi = part[0]
    if beta * L < SERIES_SWITCH:
        c4 = -q0 / one_chi
        q3 = q0 * (q0 - one_chi) / one_chi
        q13 = c4 * (part[1] + c1 * part[0])
    else:
        # e^{-2k(xi-b)} with xi = a + s
        e_xi = math.exp(beta * (L - s))
        c4 = -(w - 1.0) / (w - e_xi)
        q3 = (w - 1.0) / beta * (e_xi - 1.0) / (w - e_xi)
        q13 = (w - 1.0) * s * e_xi / (beta * (w - e_xi)) - L / beta

    coeffs = WeightedBasisCoefficients(
        w=w, c1=c1, c2=c2, c3=c3, c4=c4, q0=q0, q1=q1, q2=q2, q3=q3, q13=q13, split=iv.a + s
    )
    bad = [v for v in (q0, q1, q2, q3) if not v > 0]
    if bad:
        raise ToleranceNotMet(f"non-positive weighted norm in {coeffs}")
    res = orthogonality_residuals(iv, coeffs)
    if np.max(np.abs(res[:3])) > quad_tol:
        raise ToleranceNotMet(f"orthogonality residuals {res[:3]} exceed {quad_tol}")
    return coeffs


def basis_samples(iv: Interval, coeffs: WeightedBasisCoefficients, u):
    """Rows ``p0, p1, p2, p3`` evaluated at ``u`` (the split is included in chi)."""
    x = np.asarray(u, dtype=float) - iv.a
    return np.vstack([
        np.ones_like(x),
        x + coeffs.c1,
        x * x + coeffs.c2 * x + coeffs.c3,
        1.0 + coeffs.c4 * (x <= coeffs.split - iv.a),
    ])


# -- bounds -----------------------------------------------------------------


def _check_R(R, n):
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape != (n, n):
        raise DimensionMismatch(f"R has shape {R.shape}, expected {(n, n)}")
    return R


def _qf(v, R):
    v = np.atleast_1d(v)
    return float(v @ R @ v)


def lemma4_terms(moments: MomentVector, coeffs: WeightedBasisCoefficients):
    """The four projected vectors and their weights, in summation order."""
    c = coeffs
    om0 = np.atleast_1d(moments.m0)
    om1 = c.c1 * om0 + moments.m1
    om2 = c.c3 * om0 + c.c2 * moments.m1 + 2.0 * moments.m2
    om3 = om0 + c.c4 * moments.m_split
    return [
        (1.0 / c.q0, om0),
        (1.0 / c.q1, om1),
        (1.0 / c.q2, om2),
        (1.0 / c.q3, om3 - (c.q13 / c.q1) * om1),
    ]


def lemma4_bound(moments: MomentVector, R, coeffs: WeightedBasisCoefficients, include_step=True):
    """Lower bound on ``int_a^b exp(2k(u-b)) z' R z du``.

    With ``include_step=False`` the last (step-function) term is dropped,
    which reproduces the weaker three-term polynomial bound.
    """
    R = _check_R(R, moments.n)
    terms = lemma4_terms(moments, coeffs)
    if not include_step:
        terms = terms[:3]
    return sum(g * _qf(v, R) for g, v in terms)


def lemma5_bound(moments: MomentVector, R, length):
    """Unweighted four-term bound; ``moments.m_split`` must be over ``[a, (a+b)/2]``."""
    R = _check_R(R, moments.n)
    L = float(length)
    m0 = np.atleast_1d(moments.m0)
    om1 = m0 - 2.0 / L * moments.m1
    om2 = m0 - 6.0 / L * moments.m1 + 12.0 / L**2 * moments.m2
    # int_a^mid - int_mid^b
    om3 = 2.0 * moments.m_split - m0
    return (
        _qf(m0, R) / L
        + 3.0 * _qf(om1, R) / L
        + 5.0 * _qf(om2, R) / L
        + _qf(om3 - 1.5 * om1, R) / L
    )


def lemma2_gap(phi, basis, weight, R, grid: Grid, ortho_tol=1e-8):
    """``LHS - RHS`` of the generic four-function weighted inequality.

    ``phi`` is ``(N, n)``, ``basis`` is ``(4, N)`` with the constant function
    first and ``weight`` is ``(N,)``, all sampled on ``grid``.
    """
    phi = np.asarray(phi, dtype=float).reshape(grid.size, -1)
    basis = np.asarray(basis, dtype=float)
    weight = np.asarray(weight, dtype=float)
    if basis.shape != (4, grid.size) or weight.shape != (grid.size,):
        raise DimensionMismatch(f"basis {basis.shape} / weight {weight.shape} do not match grid of {grid.size}")
    R = _check_R(R, phi.shape[1])
    if np.any(weight <= 0):
        raise ValueError("weight must be positive")
    if not np.allclose(basis[0], 1.0):
        raise OrthogonalityViolation("first basis function must be identically one")

    gram = np.einsum("iq,jq,q->ij", basis, basis, weight * grid.weights)
    norms = np.sqrt(np.diag(gram))
    cos = gram / np.outer(norms, norms)
    for i, j in ((0, 1), (0, 2), (0, 3), (1, 2), (2, 3)):
        if abs(cos[i, j]) > ortho_tol:
            raise OrthogonalityViolation(f"<p{i},p{j}> relative residual {cos[i, j]:.3e} exceeds {ortho_tol}")

    lhs = float(grid.integrate(np.einsum("qi,ij,qj->q", phi, R, phi) * weight))
    F = [grid.integrate(basis[i][:, None] * phi * weight[:, None]) for i in range(4)]
    q = np.diag(gram)
    q13 = gram[1, 3]
    rhs = _qf(F[0], R) / q[0] + _qf(F[1], R) / q[1] + _qf(F[2], R) / q[2]
    rhs += _qf(F[3] - q13 / q[1] * F[1], R) / q[3]
    return lhs - rhs


def lemma6_bounds(path: SampledPath, R):
    """Upper bounds on ``-int int x' R x'`` for the two integration orders.

    Returns ``(tail_bound, head_bound)``: the first bounds
    ``-int_a^b int_s^b``, the second ``-int_a^b int_a^s``.
    """
    n = path.x.shape[1]
    if path.dx.shape != path.x.shape or np.size(path.x_a) != n or np.size(path.x_b) != n:
        raise DimensionMismatch("sampled path components disagree in dimension")
    R = _check_R(R, n)
    L = path.grid.b - path.grid.a
    i1 = path.grid.integrate(path.x)
    i2 = path.grid.iterated(path.x, 1)
    om5 = path.x_b - i1 / L
    om6 = path.x_b + 2.0 / L * i1 - 6.0 / L**2 * i2
    om7 = path.x_a - i1 / L
    om8 = path.x_a - 4.0 / L * i1 + 6.0 / L**2 * i2
    return (-2.0 * _qf(om5, R) - 4.0 * _qf(om6, R), -2.0 * _qf(om7, R) - 4.0 * _qf(om8, R))


def lemma6_oracle(path: SampledPath, R):
    """Quadrature values of the two negated double integrals of ``x' R x'``."""
    g = path.grid
    e = np.einsum("qi,ij,qj->q", path.dx, np.atleast_2d(R), path.dx)
    return (-float(g.integrate((g.nodes - g.a) * e)), -float(g.integrate((g.b - g.nodes) * e)))
