"""Network model, analysis parameters and the built-in example presets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidParams


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Shifted delayed network ``z' = -C z + A f(z) + B f(z(t - h(t)))``.

    ``L`` holds the sector slopes; ``f_j(s) = L_j tanh(s)`` in simulation.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    L: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        A, B = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (self.A, self.B))
        C = np.asarray(self.C, dtype=float)
        # a 1-D C is the diagonal
        C = np.diag(C) if C.ndim == 1 else np.atleast_2d(C)
        L = np.atleast_1d(np.asarray(self.L, dtype=float))
        n = A.shape[0]
        for label, m in (("A", A), ("B", B), ("C", C)):
            if m.shape != (n, n):
                raise DimensionMismatch(f"{label} has shape {m.shape}, expected {(n, n)}")
        if L.shape != (n,):
            raise DimensionMismatch(f"L has shape {L.shape}, expected ({n},)")
        if np.any(C - np.diag(np.diag(C))):
            raise InvalidParams("C must be diagonal")
        if np.any(np.diag(C) <= 0):
            raise InvalidParams("C must have strictly positive diagonal")
        if np.any(L <= 0):
            raise InvalidParams("sector slopes L must be positive")
        for attr, val in (("A", A), ("B", B), ("C", C), ("L", L)):
            val.setflags(write=False)
            object.__setattr__(self, attr, val)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def c_min(self):
        return float(np.min(np.diag(self.C)))

    def activation(self, z):
        return self.L * np.tanh(z)

    def to_dict(self):
        return {
            "name": self.name,
            "n": self.n,
            "A": self.A.ravel().tolist(),
            "B": self.B.ravel().tolist(),
            "C": np.diag(self.C).tolist(),
            "L": self.L.tolist(),
        }


@dataclass(frozen=True)
class AnalysisParams:
    h: float
    mu: float
    k: float

    def validate(self, model: NetworkModel):
        if not self.h > 0:
            raise InvalidParams(f"delay bound h must be positive, got {self.h}")
        if not 0 <= self.mu < 1:
            raise InvalidParams(f"mu must lie in [0, 1), got {self.mu}")
        if not 0 < self.k < model.c_min:
            raise InvalidParams(f"rate k must satisfy 0 < k < min c_i = {model.c_min}, got {self.k}")
        return self


EXAMPLE1 = NetworkModel(
    A=[[-1.0, 0.5], [0.5, -1.0]],
    B=[[-0.5, 0.5], [0.5, 0.5]],
    C=np.diag([2.0, 3.5]),
    L=[1.0, 1.0],
    name="example1",
)

EXAMPLE2 = NetworkModel(
    A=[
        [-0.0373, 0.4852, -0.3351, 0.2336],
        [-1.6033, 0.5988, -0.3224, 1.2352],
        [0.3394, -0.0860, -0.3824, -0.5785],
        [-0.1311, 0.3253, -0.9534, -0.5015],
    ],
    B=[
        [0.8674, -1.2405, -0.5325, -0.0220],
        [0.0474, -0.9164, 0.0360, 0.9816],
        [1.8495, 2.6117, -0.3788, 0.0824],
        [-2.0413, 0.5179, 1.1734, -0.2775],
    ],
    C=np.diag([1.2769, 0.6231, 0.9230, 0.4480]),
    L=[0.1137, 0.1279, 0.7994, 0.2368],
    name="example2",
)

EXAMPLE3 = NetworkModel(
    A=[[1.0, 1.0], [-1.0, -1.0]],
    B=[[0.88, 1.0], [1.0, 1.0]],
    C=np.diag([2.0, 2.0]),
    L=[0.4, 0.8],
    name="example3",
)

PRESETS = {"example1": EXAMPLE1, "example2": EXAMPLE2, "example3": EXAMPLE3}


@dataclass(frozen=True)
class TableTarget:
    """Reference bounds for one example: which quantity is searched and at what fixed value."""

    example: int
    preset: str
    mode: str  # "max-rate" or "max-delay"
    fixed: float  # h for max-rate, k for max-delay
    mus: tuple
    values: tuple
    # default trajectory set-up, where the example has one
    z0: tuple = ()
    delay: tuple = ()  # (h0, amplitude, frequency)


# Reference bounds of the three result tables (maximal k at h = 1,
# maximal h at k = 1e-6).  Trajectory set-ups belong to the same examples.
TABLES = {
    1: TableTarget(1, "example1", "max-rate", 1.0, (0.0, 0.8, 0.9), (1.2477, 1.0299, 1.0115)),
    2: TableTarget(
        2, "example2", "max-delay", 1e-6, (0.5, 0.8, 0.9), (4.2050, 3.6674, 3.5170),
        z0=(-1.0, -0.5, 0.5, 1.0), delay=(2.8674, 0.8, 1.0),
    ),
    3: TableTarget(
        3, "example3", "max-delay", 1e-6, (0.77, 0.80, 0.90), (7.0739, 3.5641, 2.2092),
        z0=(-1.0, 1.0), delay=(6.3039, 0.77, 1.0),
    ),
}


def decision_count(n):
    """Closed-form number of scalar decision variables, ``20.5 n^2 + 11.5 n``."""
    return (41 * n * n + 23 * n) // 2
