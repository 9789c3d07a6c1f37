"""Lagrange P1/P2 function spaces, discrete fields and boundary densities."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


def barycentric_gradients(mesh):
    """(T, 3, 2) constant gradients of the barycentric coordinates."""
    p = mesh.vertices[mesh.triangles]
    two_a = 2.0 * mesh.areas
    g = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / two_a
        g[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / two_a
    return g


def _bary(ref_points):
    ref_points = np.atleast_2d(ref_points)
    return np.column_stack([1.0 - ref_points[:, 0] - ref_points[:, 1], ref_points[:, 0], ref_points[:, 1]])


def p1_values(ref_points):
    """(Q, 3) P1 shape function values at reference points."""
    return _bary(ref_points)


def p2_values(ref_points):
    """(Q, 6) P2 shape function values; vertex functions first, then the
    midpoints of local edges (v0,v1), (v1,v2), (v2,v0)."""
    lam = _bary(ref_points)
    out = np.empty((len(lam), 6))
    for i in range(3):
        out[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        out[:, 3 + i] = 4.0 * lam[:, i] * lam[:, (i + 1) % 3]
    return out


def p2_gradients(bary_grads, ref_points):
    """(T, Q, 6, 2) physical P2 gradients at reference points."""
    lam = _bary(ref_points)
    g = bary_grads[:, None, :, :]
    T, Q = bary_grads.shape[0], len(lam)
    out = np.empty((T, Q, 6, 2))
    for i in range(3):
        j = (i + 1) % 3
        out[:, :, i] = (4.0 * lam[None, :, i, None] - 1.0) * g[:, :, i]
        out[:, :, 3 + i] = 4.0 * (lam[None, :, i, None] * g[:, :, j] + lam[None, :, j, None] * g[:, :, i])
    return out


@dataclass(frozen=True, eq=False)
class FunctionSpace:
    """Continuous Lagrange space of degree 1 or 2 with 1 or 2 components.

    Scalar dofs are the vertices, followed (degree 2) by edge midpoints in
    the mesh's edge order. Vector components are stored blockwise.
    """

    mesh: object
    degree: int = 1
    components: int = 1

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        if self.components not in (1, 2):
            raise ValueError("components must be 1 or 2")

    @property
    def n_scalar(self):
        n = self.mesh.n_vertices
        return n + len(self.mesh.edges) if self.degree == 2 else n

    @property
    def n_dofs(self):
        return self.components * self.n_scalar

    @cached_property
    def cell_dofs(self):
        """(T, 3 or 6) scalar dofs of each triangle."""
        if self.degree == 1:
            return self.mesh.triangles
        return np.hstack([self.mesh.triangles, self.mesh.n_vertices + self.mesh.triangle_edges])

    @cached_property
    def dof_coordinates(self):
        if self.degree == 1:
            return self.mesh.vertices
        e = self.mesh.edges
        mid = 0.5 * (self.mesh.vertices[e[:, 0]] + self.mesh.vertices[e[:, 1]])
        return np.vstack([self.mesh.vertices, mid])

    def boundary_dofs(self, edges):
        """Scalar dofs lying on the given (B, 2) vertex-pair edges."""
        edges = np.sort(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=1)
        verts = np.unique(edges)
        if self.degree == 1:
            return verts
        all_edges = self.mesh.edges
        key = all_edges[:, 0] * self.mesh.n_vertices + all_edges[:, 1]
        order = np.argsort(key)
        pos = np.searchsorted(key, edges[:, 0] * self.mesh.n_vertices + edges[:, 1], sorter=order)
        return np.concatenate([verts, self.mesh.n_vertices + np.sort(order[pos])])


@dataclass(frozen=True, eq=False)
class Field:
    space: FunctionSpace
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (self.space.n_dofs,):
            raise ValueError(f"expected {self.space.n_dofs} coefficients, got {c.shape}")
        object.__setattr__(self, "coefficients", c)

    def component(self, k):
        n = self.space.n_scalar
        return self.coefficients[k * n:(k + 1) * n]

    def vertex_values(self):
        """(N,) or (N, 2) values at mesh vertices."""
        nv = self.space.mesh.n_vertices
        if self.space.components == 1:
            return self.coefficients[:nv].copy()
        return np.column_stack([self.component(k)[:nv] for k in range(self.space.components)])


@dataclass(frozen=True, eq=False)
class SurfaceDensity:
    """Piecewise linear density on the obstacle loop, discontinuous between
    edges: ``values[i] = (value at start, value at end)`` of edge ``i``."""

    loop: object
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.loop), 2):
            raise ValueError(f"expected ({len(self.loop)}, 2) values, got {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, loop, c):
        return cls(loop, np.full((len(loop), 2), float(c)))

    @classmethod
    def from_nodal(cls, loop, nodal):
        nodal = np.asarray(nodal, dtype=float)
        return cls(loop, np.column_stack([nodal, np.roll(nodal, -1)]))

    @classmethod
    def from_function(cls, loop, fn):
        ends = loop.edge_endpoints()
        return cls(loop, np.column_stack([fn(ends[:, 0]), fn(ends[:, 1])]))

    def __add__(self, other):
        return SurfaceDensity(self.loop, self.values + other.values)

    def __mul__(self, s):
        return SurfaceDensity(self.loop, float(s) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return SurfaceDensity(self.loop, -self.values)

    def integral(self):
        return float(np.sum(self.loop.lengths * self.values.sum(axis=1)) / 2.0)

    def l2_norm(self):
        a, b = self.values[:, 0], self.values[:, 1]
        return float(np.sqrt(np.sum(self.loop.lengths * (a * a + a * b + b * b) / 3.0)))
