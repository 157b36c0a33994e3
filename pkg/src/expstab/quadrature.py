"""Panelled Gauss-Legendre grids for integrating sampled functions.

Functions handed to the inequality checks are represented by their values on
a fixed node set.  Panels are split at user-supplied breakpoints so that
piecewise-smooth integrands (the step basis function) are still integrated
to full accuracy.  ``adaptive`` wraps QUADPACK's Gauss-Kronrod driver for
callables and is only used as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class Grid:
    """Quadrature nodes and weights on ``[a, b]``."""

    a: float
    b: float
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss(cls, a, b, breaks=(), panels=32, order=12):
        """Composite Gauss-Legendre rule with ``panels`` panels per piece.

        Each element of ``breaks`` strictly inside ``(a, b)`` becomes a panel
        boundary.
        """
        if not b > a:
            raise ValueError(f"need b > a, got a={a}, b={b}")
        cuts = sorted({float(a), float(b), *(float(t) for t in breaks if a < t < b)})
        x, w = np.polynomial.legendre.leggauss(order)
        nodes, weights = [], []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            edges = np.linspace(lo, hi, panels + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            nodes.append((mid[:, None] + half[:, None] * x[None, :]).ravel())
            weights.append((half[:, None] * w[None, :]).ravel())
        return cls(float(a), float(b), np.concatenate(nodes), np.concatenate(weights))

    @property
    def size(self):
        return self.nodes.size

    def integrate(self, values, upto=None):
        """Integrate sampled ``values`` (leading axis = nodes) over ``[a, upto]``.

        ``upto`` must coincide with a panel boundary for exact results.
        """
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.size:
            raise ValueError(f"expected {self.size} samples, got {values.shape[0]}")
        wts = self.weights if upto is None else np.where(self.nodes < upto, self.weights, 0.0)
        return np.tensordot(wts, values, axes=(0, 0))

    def iterated(self, values, depth):
        """Iterated tail integral of order ``depth``.

        ``depth=1`` is ``int_a^b int_s^b z(u) du ds``; ``depth=2`` adds one
        more nesting.  Both collapse to single integrals against
        ``(u - a)**depth / depth!``.
        """
        kernel = (self.nodes - self.a) ** depth / float(np.prod(np.arange(1, depth + 1)))
        return self.integrate(kernel.reshape((-1,) + (1,) * (np.ndim(values) - 1)) * values)


@dataclass(frozen=True)
class SampledPath:
    """A differentiable vector function sampled on a grid.

    ``x`` and ``dx`` have shape ``(grid.size, n)``; the endpoint values are
    stored separately because Gauss nodes never hit the interval ends.
    """

    grid: Grid
    x: np.ndarray
    dx: np.ndarray
    x_a: np.ndarray
    x_b: np.ndarray

    @classmethod
    def from_callables(cls, grid, x, dx):
        return cls(
            grid,
            np.atleast_2d(np.asarray(x(grid.nodes), dtype=float).T).reshape(grid.size, -1),
            np.atleast_2d(np.asarray(dx(grid.nodes), dtype=float).T).reshape(grid.size, -1),
            np.asarray(x(grid.a), dtype=float).ravel(),
            np.asarray(x(grid.b), dtype=float).ravel(),
        )


def adaptive(f, a, b, points=None, epsabs=1e-11, epsrel=1e-12, limit=500):
    """Adaptive Gauss-Kronrod integral of a scalar callable."""
    val, _err = integrate.quad(f, a, b, points=points, epsabs=epsabs, epsrel=epsrel, limit=limit)
    return val
