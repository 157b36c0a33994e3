"""Symmetric matrices affine in scalar decision variables.

An expression of size ``d`` is stored as one sparse ``(d*d, nvars + 1)``
matrix: column 0 is the column-major ``vec`` of the constant term and column
``j + 1`` is ``vec`` of the coefficient of variable ``j``.  Terms of the form
``L X R^T`` are then a single sparse product
``kron(R, L) @ vec(X)`` with ``vec(X)`` linear in the variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch

# registry layout: (name, kind, size); kinds are sym, diag and full
THEOREM_LAYOUT = (
    ("P", "sym", 3),
    ("Q", "sym", 2),
    ("U1", "sym", 1),
    ("U2", "sym", 1),
    ("U3", "sym", 1),
    ("Z1", "sym", 1),
    ("Z2", "sym", 1),
    ("Z3", "sym", 1),
    ("N1", "sym", 1),
    ("N2", "sym", 1),
    ("M1", "sym", 1),
    ("M2", "sym", 1),
    ("D1", "diag", 1),
    ("D2", "diag", 1),
    ("R1", "diag", 1),
    ("R2", "diag", 1),
    ("S", "full", 3),
)


@dataclass(frozen=True)
class MatrixVariable:
    name: str
    kind: str
    dim: int
    offset: int
    # (row, col) of each scalar, row <= col for symmetric matrices
    entries: tuple

    @property
    def count(self):
        return len(self.entries)

    def vec_map(self):
        """Sparse map from the full variable vector to ``vec(X)`` (column-major)."""
        d = self.dim
        rows, cols = [], []
        for j, (r, c) in enumerate(self.entries):
            rows.append(r + c * d)
            cols.append(self.offset + j)
            if self.kind == "sym" and r != c:
                rows.append(c + r * d)
                cols.append(self.offset + j)
        return rows, cols

    def unpack(self, x):
        X = np.zeros((self.dim, self.dim))
        vals = np.asarray(x)[self.offset:self.offset + self.count]
        for (r, c), v in zip(self.entries, vals):
            X[r, c] = v
            if self.kind == "sym":
                X[c, r] = v
        return X

    def pack(self, X, out):
        for j, (r, c) in enumerate(self.entries):
            out[self.offset + j] = X[r, c]


@dataclass(frozen=True)
class DecisionRegistry:
    n: int
    variables: dict = field(repr=False)
    size: int = 0

    @classmethod
    def from_layout(cls, n, layout=THEOREM_LAYOUT):
        if n < 1:
            raise ValueError(f"state dimension must be >= 1, got {n}")
        variables, offset = {}, 0
        for name, kind, mult in layout:
            d = mult * n
            if kind == "sym":
                entries = tuple((r, c) for c in range(d) for r in range(c + 1))
            elif kind == "diag":
                entries = tuple((i, i) for i in range(d))
            elif kind == "full":
                entries = tuple((r, c) for c in range(d) for r in range(d))
            else:
                raise ValueError(f"unknown matrix kind {kind!r}")
            variables[name] = MatrixVariable(name, kind, d, offset, entries)
            offset += len(entries)
        return cls(n, variables, offset)

    def __getitem__(self, name) -> MatrixVariable:
        return self.variables[name]

    def __iter__(self):
        return iter(self.variables.values())

    def describe(self, idx):
        """``(matrix name, row, col)`` of scalar variable ``idx``."""
        for var in self.variables.values():
            if var.offset <= idx < var.offset + var.count:
                r, c = var.entries[idx - var.offset]
                return var.name, r, c
        raise IndexError(idx)

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise DimensionMismatch(f"valuation has shape {x.shape}, registry needs ({self.size},)")
        return {name: var.unpack(x) for name, var in self.variables.items()}

    def pack(self, values):
        out = np.zeros(self.size)
        for name, var in self.variables.items():
            var.pack(np.asarray(values[name], dtype=float), out)
        return out


class AffineSymmetricExpression:
    """``M(x) = M0 + sum_j x_j M_j`` with every ``M_j`` symmetric."""

    __slots__ = ("dim", "nvars", "data")

    def __init__(self, dim, nvars, data=None):
        self.dim = dim
        self.nvars = nvars
        if data is None:
            data = sp.csc_matrix((dim * dim, nvars + 1))
        if data.shape != (dim * dim, nvars + 1):
            raise DimensionMismatch(f"coefficient block {data.shape} != {(dim * dim, nvars + 1)}")
        self.data = sp.csc_matrix(data)

    # construction

    @classmethod
    def zeros(cls, dim, nvars):
        return cls(dim, nvars)

    @classmethod
    def constant(cls, C, nvars):
        C = np.asarray(C, dtype=float)
        d = C.shape[0]
        col = sp.csc_matrix(C.reshape(-1, order="F")[:, None])
        return cls(d, nvars, sp.hstack([col, sp.csc_matrix((d * d, nvars))]))

    @classmethod
    def product(cls, registry: DecisionRegistry, left, name, right=None, scale=1.0):
        """``scale * left @ X @ right.T`` for decision matrix ``X``.

        ``right`` defaults to ``left``.  The result is symmetrised only when
        ``right is None``; callers needing ``sym`` should use :meth:`sym`.
        """
        var = registry[name]
        left = sp.csc_matrix(left)
        right = left if right is None else sp.csc_matrix(right)
        if left.shape[1] != var.dim or right.shape[1] != var.dim:
            raise DimensionMismatch(f"{name} is {var.dim}x{var.dim}, factors are {left.shape} and {right.shape}")
        if left.shape[0] != right.shape[0]:
            raise DimensionMismatch(f"left has {left.shape[0]} rows, right has {right.shape[0]}")
        d = left.shape[0]
        rows, cols = var.vec_map()
        T = sp.csc_matrix((np.ones(len(rows)), (rows, np.asarray(cols) + 1)),
                          shape=(var.dim * var.dim, registry.size + 1))
        return cls(d, registry.size, scale * (sp.kron(right, left, format="csc") @ T))

    @classmethod
    def sym_product(cls, registry, left, name, right, scale=1.0):
        """``sym(scale * left @ X @ right.T)``."""
        return cls.product(registry, left, name, right, scale).sym()

    # algebra

    def _check(self, other):
        if self.dim != other.dim or self.nvars != other.nvars:
            raise DimensionMismatch(f"cannot combine {self.dim}x{self.dim}/{self.nvars} with "
                                    f"{other.dim}x{other.dim}/{other.nvars}")

    def __add__(self, other):
        self._check(other)
        return AffineSymmetricExpression(self.dim, self.nvars, self.data + other.data)

    def __sub__(self, other):
        self._check(other)
        return AffineSymmetricExpression(self.dim, self.nvars, self.data - other.data)

    def __neg__(self):
        return AffineSymmetricExpression(self.dim, self.nvars, -self.data)

    def __mul__(self, s):
        return AffineSymmetricExpression(self.dim, self.nvars, float(s) * self.data)

    __rmul__ = __mul__

    def transpose(self):
        d = self.dim
        i, j = np.divmod(np.arange(d * d), d)
        # row r = a + b*d of vec(M) holds M[a, b]; vec(M^T) takes it from M[b, a]
        perm = j * d + i
        return AffineSymmetricExpression(d, self.nvars, self.data[perm, :])

    @property
    def T(self):
        return self.transpose()

    def sym(self):
        return self + self.transpose()

    def congruence(self, V):
        """``V^T M(x) V`` for a constant ``V``."""
        V = sp.csc_matrix(V)
        if V.shape[0] != self.dim:
            raise DimensionMismatch(f"congruence factor has {V.shape[0]} rows, expression is {self.dim}")
        return AffineSymmetricExpression(V.shape[1], self.nvars, sp.kron(V.T, V.T, format="csc") @ self.data)

    # inspection

    @property
    def constant_term(self):
        return self.data[:, 0].toarray().reshape(self.dim, self.dim, order="F")

    def coefficient(self, j):
        return self.data[:, j + 1].toarray().reshape(self.dim, self.dim, order="F")

    def variables(self):
        """Ids of variables with a non-zero coefficient."""
        nz = np.diff(self.data.indptr)
        return [j - 1 for j in np.flatnonzero(nz) if j > 0]

    def coefficients(self):
        """Sparse mapping ``{variable id: d x d coefficient}``."""
        return {j: self.coefficient(j) for j in self.variables()}

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.nvars,):
            raise DimensionMismatch(f"valuation has shape {x.shape}, expected ({self.nvars},)")
        v = self.data @ np.concatenate(([1.0], x))
        return np.asarray(v).reshape(self.dim, self.dim, order="F")

    def is_homogeneous(self):
        return self.data[:, 0].nnz == 0 or not np.any(self.data[:, 0].toarray())

    def asymmetry(self):
        """Largest entry of ``M_j - M_j^T`` over all stored coefficients."""
        diff = self.data - self.transpose().data
        return float(abs(diff).max()) if diff.nnz else 0.0

    def __repr__(self):
        return f"AffineSymmetricExpression(dim={self.dim}, nvars={self.nvars}, nnz={self.data.nnz})"
