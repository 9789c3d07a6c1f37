"""Geometric constraints, their shape-derivative densities and the augmented Lagrangian.

All densities ``δ`` here are meant as ``dF[V] = ∫_Γ δ <V, n> ds`` with ``n``
the unit normal pointing out of the obstacle into the fluid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import SurfaceDensity


@dataclass(frozen=True)
class GeometricReference:
    volume: float
    barycenter: tuple

    def __post_init__(self):
        if not self.volume > 0:
            raise ValueError("reference volume must be positive")
        object.__setattr__(self, "barycenter", tuple(float(x) for x in self.barycenter))

    @classmethod
    def of(cls, loop):
        return cls(volume(loop), tuple(barycenter(loop)))


@dataclass(frozen=True)
class AlParameters:
    multipliers: np.ndarray
    penalty: float

    def __post_init__(self):
        lam = np.asarray(self.multipliers, dtype=float).reshape(-1)
        if self.penalty < 0:
            raise ValueError("penalty must be nonnegative")
        object.__setattr__(self, "multipliers", lam)


def _edge_integral(loop, fn):
    """Exact integral along each straight edge of a polynomial of degree <= 3."""
    a = loop.points
    b = np.roll(loop.points, -1, axis=0)
    # Simpson is exact to degree 3
    mid = 0.5 * (a + b)
    return loop.lengths * (fn(a) + 4.0 * fn(mid) + fn(b)) / 6.0


def volume(loop):
    """Enclosed area ``(1/2) ∫_Γ <x, n> ds``."""
    n = loop.normals
    return float(np.sum(_edge_integral(loop, lambda x: np.einsum("ij,ij->i", x, n)))) / 2.0


def barycenter(loop):
    """Centroid ``(1/(2 vol)) ∫_Γ <(x1², x2²), n> ds`` of the enclosed region."""
    vol = volume(loop)
    if not vol > 0:
        raise ValueError("barycenter of a loop with zero enclosed area")
    n = loop.normals
    out = [np.sum(_edge_integral(loop, lambda x, k=k: x[:, k] ** 2 * n[:, k])) for k in range(2)]
    return np.array(out) / (2.0 * vol)


def shoelace_area(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * abs(float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))


def polygon_centroid(points):
    x, y = points[:, 0], points[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    return np.array([np.sum((x + xn) * cross), np.sum((y + yn) * cross)]) / (6.0 * a)


def constraints(loop, ref):
    """Barycenter and volume offsets from the reference shape, length 3."""
    bc = barycenter(loop)
    return np.array([bc[0] - ref.barycenter[0], bc[1] - ref.barycenter[1], volume(loop) - ref.volume])


def constraint_densities(loop, vol, bc):
    """Densities of the shape derivatives of ``bc_1``, ``bc_2`` and ``vol``."""
    ends = loop.edge_endpoints()
    d1 = (ends[:, :, 0] - bc[0]) / vol
    d2 = (ends[:, :, 1] - bc[1]) / vol
    return (SurfaceDensity(loop, d1), SurfaceDensity(loop, d2), SurfaceDensity.constant(loop, 1.0))


def al_value(J, c, params):
    """``J + λ·c + (μ/2) |c|²``."""
    c = np.asarray(c, dtype=float)
    return float(J + params.multipliers @ c + 0.5 * params.penalty * (c @ c))


def al_density(objective_density, densities, c, params, loop=None, objective_sign=1.0):
    """Density ``γ`` of the augmented Lagrangian's shape derivative.

    ``γ = s·(Σ (∂v_i/∂n)²) + Σ_i (λ_i + μ c_i) δ_i``; growing the obstacle along
    its outward normal shrinks the fluid domain and raises the dissipation,
    so with the fluid-pointing normal the objective term enters with ``s = +1``.
    ``objective_sign`` exists for fault-injection checks only.
    """
    c = np.asarray(c, dtype=float)
    coef = params.multipliers + params.penalty * c
    values = objective_sign * objective_density.values.copy()
    for k, d in enumerate(densities):
        values = values + coef[k] * d.values
    return SurfaceDensity(objective_density.loop if loop is None else loop, values)


def pairing(density, normal_field_values):
    """``∫_Γ γ <w, n> ds`` for a P1 vector field ``w`` given at the loop vertices."""
    loop = density.loop
    w0 = np.einsum("ij,ij->i", normal_field_values, loop.normals)
    w1 = np.einsum("ij,ij->i", np.roll(normal_field_values, -1, axis=0), loop.normals)
    g0, g1 = density.values[:, 0], density.values[:, 1]
    # exact integral of the product of two linear functions along each edge
    return float(np.sum(loop.lengths * (2 * g0 * w0 + g0 * w1 + g1 * w0 + 2 * g1 * w1) / 6.0))
