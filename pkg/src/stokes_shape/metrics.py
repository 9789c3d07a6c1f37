"""Riesz representatives of shape derivatives under the two shape metrics.

``steklov_poincare``: the gradient is the elastic displacement driven by the
boundary force ``γ n``; its inner product is the elastic energy.
``laplace_beltrami``: the gradient is a normal field ``α n`` with
``(M + A K) α = ∫ γ φ`` on the boundary loop, extended into the domain by an
elasticity solve with ``α n`` as Dirichlet data.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fem import (Factorization, apply_dirichlet, assemble_elasticity, assemble_poisson, l2_project,
                  normal_load, solve, surface_load, surface_mass, surface_stiffness)
from .mesh import OUTER_MARKERS, BoundaryMarker, obstacle_loop

STEKLOV_POINCARE = "steklov_poincare"
LAPLACE_BELTRAMI = "laplace_beltrami"
KINDS = (STEKLOV_POINCARE, LAPLACE_BELTRAMI)


def lame_from_young(E, nu):
    """``(λ, μ)`` from Young's modulus and Poisson's ratio."""
    if not (E > 0 and -1.0 < nu < 0.5):
        raise ValueError("need E > 0 and -1 < nu < 0.5")
    return nu * E / ((1.0 + nu) * (1.0 - 2.0 * nu)), E / (2.0 * (1.0 + nu))


@dataclass(frozen=True)
class MetricConfig:
    kind: str = STEKLOV_POINCARE
    A: float = 0.1
    mu_min: float = 1.0
    mu_max: float = 500.0
    lambda_elas: float = 0.0

    def __post_init__(self):
        kind = str(self.kind).lower().replace("-", "_")
        aliases = {"sp": STEKLOV_POINCARE, "gs": STEKLOV_POINCARE, "lb": LAPLACE_BELTRAMI, "g1": LAPLACE_BELTRAMI}
        kind = aliases.get(kind, kind)
        if kind not in KINDS:
            raise ValueError(f"unknown metric {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if not self.A > 0:
            raise ValueError("A must be positive")
        if not 0 < self.mu_min <= self.mu_max:
            raise ValueError("need 0 < mu_min <= mu_max")


@dataclass(frozen=True, eq=False)
class LameField:
    mu: np.ndarray
    lambda_elas: float = 0.0


def compute_mu_field(mesh, mu_min, mu_max, lambda_elas=0.0):
    """Harmonic shear modulus: ``mu_max`` on the obstacle, ``mu_min`` on the outer boundary."""
    if not 0 < mu_min <= mu_max:
        raise ValueError("need 0 < mu_min <= mu_max")
    values = {m: mu_min for m in OUTER_MARKERS}
    values[BoundaryMarker.OBSTACLE] = mu_max
    present = {BoundaryMarker(int(m)) for m in np.unique(mesh.boundary_markers)}
    mu = solve(assemble_poisson(mesh, {m: v for m, v in values.items() if m in present}))
    # P1 solutions can overshoot by round-off on non-Delaunay elements
    return LameField(np.clip(mu, mu_min, mu_max), float(lambda_elas))


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Coefficient vector of a tangent element: blockwise P1 displacement
    (Steklov-Poincaré) or boundary nodal values ``α`` (Laplace-Beltrami)."""

    kind: str
    coefficients: np.ndarray
    extension: np.ndarray | None = None

    def _new(self, coefficients):
        return TangentVector(self.kind, coefficients)

    def __add__(self, other):
        return self._new(self.coefficients + other.coefficients)

    def __sub__(self, other):
        return self._new(self.coefficients - other.coefficients)

    def __mul__(self, s):
        return self._new(float(s) * self.coefficients)

    __rmul__ = __mul__

    def __neg__(self):
        return self._new(-self.coefficients)


class MetricContext:
    """Metric operators on one iterate's mesh."""

    def __init__(self, mesh, config, lame, loop=None):
        self.mesh = mesh
        self.config = config
        self.lame = lame
        self.loop = obstacle_loop(mesh) if loop is None else loop
        self.kind = config.kind

    @cached_property
    def elasticity(self):
        return assemble_elasticity(self.mesh, self.lame.mu, self.lame.lambda_elas)

    @cached_property
    def _fixed_dofs(self):
        n = self.mesh.n_vertices
        outer = self.mesh.outer_vertices
        return np.concatenate([outer, outer + n])

    @cached_property
    def _elastic_free(self):
        K, _ = apply_dirichlet(self.elasticity, np.zeros(self.elasticity.shape[0]), self._fixed_dofs, 0.0)
        return Factorization(K)

    @cached_property
    def _boundary_dirichlet(self):
        n = self.mesh.n_vertices
        lv = self.loop.vertices
        dofs = np.concatenate([self._fixed_dofs, lv, lv + n])
        K, _ = apply_dirichlet(self.elasticity, np.zeros(2 * n), dofs, 0.0)
        return dofs, Factorization(K)

    @cached_property
    def helmholtz(self):
        return surface_mass(self.loop) + self.config.A * surface_stiffness(self.loop)

    @cached_property
    def _helmholtz_lu(self):
        return Factorization(self.helmholtz)

    @cached_property
    def _loop_mass(self):
        return surface_mass(self.loop)

    # -- Riesz maps -------------------------------------------------------------

    def riesz(self, density):
        if self.kind == STEKLOV_POINCARE:
            return self.riesz_steklov_poincare(density)
        return self.riesz_laplace_beltrami(density)

    def riesz_steklov_poincare(self, density):
        f = normal_load(self.mesh, density)
        f[self._fixed_dofs] = 0.0
        U = self._elastic_free.solve(f)
        return TangentVector(STEKLOV_POINCARE, U)

    def riesz_laplace_beltrami(self, density):
        projected = l2_project(density, self.loop)
        alpha = self._helmholtz_lu.solve(self._loop_mass @ projected)
        return TangentVector(LAPLACE_BELTRAMI, alpha, self.extend(alpha))

    def extend(self, alpha):
        """Elastic extension of the boundary displacement ``α n`` (vertex normals)."""
        return self.extend_displacement(alpha[:, None] * self.loop.vertex_normals)

    def extend_displacement(self, boundary):
        """Blockwise elastic extension of a (n_loop, 2) displacement given at
        the obstacle vertices, zero on the outer boundary."""
        n = self.mesh.n_vertices
        lv = self.loop.vertices
        dofs, lu = self._boundary_dirichlet
        g = np.zeros(2 * n)
        g[lv] = boundary[:, 0]
        g[lv + n] = boundary[:, 1]
        rhs = -(self.elasticity @ g)
        rhs[dofs] = g[dofs]
        return lu.solve(rhs)

    # -- inner products and pairings ------------------------------------------------

    def inner(self, u, w):
        if u.kind != w.kind or u.kind != self.kind:
            raise ValueError(f"cannot pair {u.kind} with {w.kind} under the {self.kind} metric")
        if self.kind == STEKLOV_POINCARE:
            return float(u.coefficients @ (self.elasticity @ w.coefficients))
        return float(u.coefficients @ (self.helmholtz @ w.coefficients))

    def pairing(self, density, w):
        """``∫_Γ γ <w, n> ds``; for Laplace-Beltrami tangents ``w = β n`` this is ``∫ γ β``."""
        if w.kind == LAPLACE_BELTRAMI:
            return float(surface_load(density) @ w.coefficients)
        return float(normal_load(self.mesh, density) @ w.coefficients)

    def displacement(self, v):
        """(N, 2) mesh displacement realizing the tangent vector."""
        n = self.mesh.n_vertices
        if v.kind == STEKLOV_POINCARE:
            c = v.coefficients
        else:
            c = v.extension if v.extension is not None else self.extend(v.coefficients)
        return np.column_stack([c[:n], c[n:]])

    def boundary_norm(self, displacement):
        """L2(Γ) norm of a displacement field restricted to the obstacle."""
        d = displacement[self.loop.vertices]
        M = self._loop_mass
        return float(np.sqrt(sum(d[:, k] @ (M @ d[:, k]) for k in range(2))))

    def tangential_norm(self, displacement):
        """L2(Γ) norm of the displacement component tangent to Γ at each vertex."""
        d = displacement[self.loop.vertices]
        nv = self.loop.vertex_normals
        t = np.einsum("ij,ij->i", d, np.column_stack([-nv[:, 1], nv[:, 0]]))
        return float(np.sqrt(t @ (self._loop_mass @ t)))


def riesz_steklov_poincare(mesh, density, lame):
    return MetricContext(mesh, MetricConfig(STEKLOV_POINCARE), lame, density.loop).riesz(density)


def riesz_laplace_beltrami(mesh, density, config, lame):
    cfg = MetricConfig(LAPLACE_BELTRAMI, config.A, config.mu_min, config.mu_max, config.lambda_elas)
    return MetricContext(mesh, cfg, lame, density.loop).riesz(density)


def inner_product(u, w, context):
    return context.inner(u, w)
