"""State equation, energy dissipation and its boundary sensitivity density.

The shape derivative of the dissipation in direction ``V`` is the boundary
integral of ``<V, n>`` against :func:`objective_density`, with a sign fixed
in :mod:`stokes_shape.shape_calculus`; this module only stores the
nonnegative sum of squared normal derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import Factorization, Field, SurfaceDensity, assemble_stokes, barycentric_gradients, p2_gradients

_REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def uniform_inflow(magnitude=1.0):
    def profile(x):
        x = np.atleast_2d(x)
        return np.column_stack([np.full(len(x), float(magnitude)), np.zeros(len(x))])
    return profile


def parabolic_inflow(magnitude=1.0, y_min=-1.0, y_max=1.0):
    """Poiseuille profile with peak ``magnitude`` between the two walls."""
    def profile(x):
        x = np.atleast_2d(x)
        y = x[:, 1]
        u = 4.0 * magnitude * (y - y_min) * (y_max - y) / (y_max - y_min) ** 2
        return np.column_stack([u, np.zeros(len(x))])
    return profile


@dataclass(frozen=True, eq=False)
class StokesSolution:
    velocity: Field
    pressure: Field
    dissipation: float

    @property
    def mesh(self):
        return self.velocity.space.mesh

    def velocity_gradients(self, triangles, ref_points):
        """(k, Q, 2, 2) gradients ``[i, j] = ∂v_i/∂x_j`` at reference points of the given triangles."""
        mesh = self.mesh
        G = barycentric_gradients(mesh)[triangles]
        dphi = p2_gradients(G, ref_points)
        dofs = self.velocity.space.cell_dofs[triangles]
        out = np.empty(dphi.shape[:2] + (2, 2))
        for i in range(2):
            coef = self.velocity.component(i)[dofs]
            out[:, :, i, :] = np.einsum("kj,kqjd->kqd", coef, dphi)
        return out


def dissipation(solution):
    """``∫ Σ_ij (∂v_i/∂x_j)^2 dx``, exact for the P2 field."""
    return float(solution.dissipation)


def _dissipation(stiffness, velocity):
    return float(sum(c @ (stiffness @ c) for c in (velocity.component(0), velocity.component(1))))


def solve_stokes(mesh, v_inflow=None, boundary_velocity=None):
    """Taylor-Hood solution with ``v_inflow`` on inflow/outflow edges and no
    slip elsewhere, or ``boundary_velocity`` on the whole boundary."""
    asm = assemble_stokes(mesh, v_inflow, boundary_velocity)
    x = Factorization(asm.system.matrix).solve(asm.system.rhs)
    nvel = asm.velocity_space.n_dofs
    u = Field(asm.velocity_space, x[:nvel])
    p = x[nvel:]
    p = p - (asm.pressure_weights @ p) / asm.pressure_weights.sum()
    pressure = Field(asm.pressure_space, p)
    return StokesSolution(u, pressure, _dissipation(asm.velocity_stiffness, u))


def objective_density(solution, loop):
    """Per-edge linear density ``Σ_i (∂v_i/∂n)^2`` from the P2 gradient of the
    single fluid triangle adjacent to each edge, evaluated at the edge ends."""
    if loop.fluid_triangles is None:
        raise ValueError("loop carries no adjacent-triangle information")
    tris = loop.fluid_triangles
    grads = solution.velocity_gradients(tris, _REF_VERTICES)
    local = solution.mesh.triangles[tris]
    a = loop.vertices
    b = np.roll(loop.vertices, -1)
    k = np.arange(len(tris))
    ia = np.argmax(local == a[:, None], axis=1)
    ib = np.argmax(local == b[:, None], axis=1)
    n = loop.normals
    values = np.empty((len(tris), 2))
    for col, idx in ((0, ia), (1, ib)):
        g = grads[k, idx]
        dn = np.einsum("kij,kj->ki", g, n)
        values[:, col] = np.sum(dn * dn, axis=1)
    return SurfaceDensity(loop, values)
