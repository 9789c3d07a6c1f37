"""Sparse linear systems, Dirichlet elimination and the direct-solve contract."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10


class LinearSolveError(RuntimeError):
    """Factorization breakdown or a residual above the solve contract."""


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        b = np.asarray(self.rhs, dtype=float)
        if m.shape[0] != m.shape[1] or m.shape[0] != len(b):
            raise ValueError(f"matrix {m.shape} does not match rhs of length {len(b)}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "rhs", b)


def apply_dirichlet(matrix, rhs, dofs, values):
    """Symmetric elimination: lift the rhs, zero the rows and columns of
    ``dofs``, put 1 on their diagonal and the prescribed values in the rhs."""
    n = matrix.shape[0]
    dofs = np.asarray(dofs, dtype=np.int64)
    g = np.zeros(n)
    g[dofs] = values
    b = np.asarray(rhs, dtype=float) - matrix @ g
    keep = np.ones(n)
    keep[dofs] = 0.0
    K = sp.diags(keep) @ matrix @ sp.diags(keep) + sp.diags(1.0 - keep)
    b[dofs] = g[dofs]
    K = sp.csr_matrix(K)
    K.eliminate_zeros()
    return K, b


class Factorization:
    """Sparse LU factorization reusable for several right-hand sides."""

    def __init__(self, matrix):
        self.matrix = sp.csc_matrix(matrix)
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise LinearSolveError(f"factorization failed for {self.matrix.shape} matrix: {exc}") from exc

    def solve(self, rhs):
        b = np.asarray(rhs, dtype=float)
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise LinearSolveError("solution contains non-finite entries")
        res = np.linalg.norm(self.matrix @ x - b)
        bound = RESIDUAL_TOL * (1.0 + np.linalg.norm(b))
        if res > bound:
            # one step of iterative refinement before giving up
            x = x + self._lu.solve(b - self.matrix @ x)
            res = np.linalg.norm(self.matrix @ x - b)
            if res > bound:
                raise LinearSolveError(f"residual {res:.3e} exceeds {bound:.3e} (n={len(b)})")
        return x


def solve(system):
    """Solve ``system`` to residual <= 1e-10 (1 + |rhs|)."""
    return Factorization(system.matrix).solve(system.rhs)


def export_matrix_market(system, path):
    scipy.io.mmwrite(path, system.matrix, symmetry="symmetric" if system.symmetric else "general")
