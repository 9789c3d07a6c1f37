"""Matrix and vector assembly for the volume and surface finite element forms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..mesh import BoundaryMarker
from .linalg import SparseSystem, apply_dirichlet, solve
from .quadrature import triangle_rule
from .spaces import FunctionSpace, SurfaceDensity, barycentric_gradients, p1_values, p2_gradients

VOLUME_DEGREE = 4


def _scatter(local, rows, cols, shape):
    T, a, b = local.shape
    r = np.repeat(rows, b, axis=1).reshape(T, a, b)
    c = np.tile(cols, (1, a)).reshape(T, a, b)
    m = sp.coo_matrix((local.ravel(), (r.ravel(), c.ravel())), shape=shape)
    return m.tocsr()


# -- P1 volume forms -----------------------------------------------------------

def p1_stiffness(mesh):
    G = barycentric_gradients(mesh)
    local = mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", G, G)
    n = mesh.n_vertices
    return _scatter(local, mesh.triangles, mesh.triangles, (n, n))


def p1_mass(mesh):
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = mesh.areas[:, None, None] * ref[None]
    n = mesh.n_vertices
    return _scatter(local, mesh.triangles, mesh.triangles, (n, n))


def p1_integrals(mesh):
    """Integral of each P1 basis function over the domain."""
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return out


def assemble_poisson(mesh, dirichlet, rhs=None):
    """P1 Laplace system with boundary values ``dirichlet[marker]`` on every
    marked boundary segment; all markers present in the mesh need a value."""
    values = {BoundaryMarker.parse(k): float(v) for k, v in dirichlet.items()}
    present = {BoundaryMarker(int(m)) for m in np.unique(mesh.boundary_markers)}
    missing = present - set(values)
    if missing:
        raise ValueError(f"no Dirichlet value for markers {sorted(m.name for m in missing)}")
    g = np.zeros(mesh.n_vertices)
    for marker in sorted(values):
        verts = mesh.marker_vertices(marker)
        g[verts] = values[marker]
    dofs = mesh.marker_vertices(*present)
    K = p1_stiffness(mesh)
    b = np.zeros(mesh.n_vertices) if rhs is None else np.asarray(rhs, dtype=float)
    K, b = apply_dirichlet(K, b, dofs, g[dofs])
    return SparseSystem(K, b, symmetric=True)


# -- elasticity ------------------------------------------------------------------

def assemble_elasticity(mesh, mu, lambda_elas=0.0):
    """Stiffness of ``∫ σ(U):ε(V)`` over P1 vector fields, blockwise (ux, uy).

    ``mu`` holds nodal values of the (P1) shear modulus.
    """
    mu = np.asarray(getattr(mu, "coefficients", mu), dtype=float)
    if mu.shape != (mesh.n_vertices,):
        raise ValueError("mu needs one value per vertex")
    if np.any(mu <= 0):
        raise ValueError("shear modulus must be strictly positive")
    G = barycentric_gradients(mesh)
    area = mesh.areas
    mu_bar = mu[mesh.triangles].mean(axis=1)
    gg = np.einsum("tid,tjd->tij", G, G)
    n = mesh.n_vertices
    K = sp.csr_matrix((2 * n, 2 * n))
    for c in range(2):
        for d in range(2):
            local = mu_bar[:, None, None] * (float(c == d) * gg + G[:, :, d, None] * G[:, None, :, c])
            local = local + lambda_elas * G[:, :, c, None] * G[:, None, :, d]
            local = area[:, None, None] * local
            K = K + _scatter(local, mesh.triangles + c * n, mesh.triangles + d * n, (2 * n, 2 * n))
    return K


# -- Stokes ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StokesAssembly:
    system: SparseSystem
    velocity_space: FunctionSpace
    pressure_space: FunctionSpace
    velocity_stiffness: sp.csr_matrix
    pressure_weights: np.ndarray
    dirichlet_dofs: np.ndarray
    pinned_dof: int


def _p2_element_data(mesh, degree=VOLUME_DEGREE):
    pts, w = triangle_rule(degree)
    G = barycentric_gradients(mesh)
    dphi = p2_gradients(G, pts)
    jw = 2.0 * mesh.areas[:, None] * w[None, :]
    return pts, jw, dphi


def velocity_dirichlet(mesh, space, v_inflow, boundary_velocity=None):
    """Dofs and values of the no-slip / inflow velocity data. Vertices shared
    by an inflow or outflow edge and a wall take the inflow/outflow value.

    ``boundary_velocity``, if given, prescribes the velocity on every
    boundary edge regardless of its marker (manufactured solutions).
    """
    ns = space.n_scalar
    if boundary_velocity is not None:
        bdofs = space.boundary_dofs(mesh.boundary_edges)
        vals = np.asarray(boundary_velocity(space.dof_coordinates[bdofs]), dtype=float).reshape(-1, 2)
        return np.concatenate([bdofs, bdofs + ns]), np.concatenate([vals[:, 0], vals[:, 1]])
    zero_edges = mesh.marker_edges(BoundaryMarker.WALL, BoundaryMarker.OBSTACLE)
    flow_edges = mesh.marker_edges(BoundaryMarker.INFLOW, BoundaryMarker.OUTFLOW)
    values = {}
    for dof in space.boundary_dofs(zero_edges).tolist():
        values[dof] = (0.0, 0.0)
    if len(flow_edges):
        if v_inflow is None:
            raise ValueError("inflow/outflow boundary present but no inflow velocity given")
        fdofs = space.boundary_dofs(flow_edges)
        vals = np.asarray(v_inflow(space.dof_coordinates[fdofs]), dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(vals)):
            raise ValueError("inflow velocity is not finite")
        for dof, v in zip(fdofs.tolist(), vals.tolist()):
            values[dof] = tuple(v)
    dofs = np.array(sorted(values), dtype=np.int64)
    vals = np.array([values[d] for d in dofs.tolist()]).reshape(-1, 2)
    return np.concatenate([dofs, dofs + ns]), np.concatenate([vals[:, 0], vals[:, 1]])


def assemble_stokes(mesh, v_inflow=None, boundary_velocity=None):
    """Taylor-Hood (P2 velocity, P1 pressure) system for ``Δv + ∇p = 0``,
    ``div v = 0`` with Dirichlet velocity data eliminated symmetrically and
    the first pressure dof pinned to zero."""
    V = FunctionSpace(mesh, 2, 2)
    Q = FunctionSpace(mesh, 1, 1)
    pts, jw, dphi = _p2_element_data(mesh)
    ns, npr = V.n_scalar, Q.n_dofs
    vdofs = V.cell_dofs
    Kloc = np.einsum("tq,tqid,tqjd->tij", jw, dphi, dphi)
    K = _scatter(Kloc, vdofs, vdofs, (ns, ns))
    psi = p1_values(pts)
    Bx = _scatter(np.einsum("tq,qi,tqj->tij", jw, psi, dphi[..., 0]), mesh.triangles, vdofs, (npr, ns))
    By = _scatter(np.einsum("tq,qi,tqj->tij", jw, psi, dphi[..., 1]), mesh.triangles, vdofs, (npr, ns))
    A = sp.block_diag([K, K])
    B = sp.hstack([Bx, By])
    M = sp.bmat([[A, B.T], [B, None]], format="csr")
    dofs, vals = velocity_dirichlet(mesh, V, v_inflow, boundary_velocity)
    pinned = 2 * ns
    dofs = np.concatenate([dofs, [pinned]])
    vals = np.concatenate([vals, [0.0]])
    M, b = apply_dirichlet(M, np.zeros(M.shape[0]), dofs, vals)
    return StokesAssembly(SparseSystem(M, b, symmetric=True), V, Q, K, p1_integrals(mesh), dofs, pinned)


# -- surface forms on the obstacle loop -----------------------------------------------

def _loop_pairs(loop):
    n = len(loop)
    i = np.arange(n)
    return i, (i + 1) % n


def surface_mass(loop):
    n = len(loop)
    a, b = _loop_pairs(loop)
    L = loop.lengths
    local = L[:, None, None] * (np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0)[None]
    idx = np.column_stack([a, b])
    return _scatter(local, idx, idx, (n, n))


def surface_stiffness(loop):
    n = len(loop)
    a, b = _loop_pairs(loop)
    L = loop.lengths
    local = (1.0 / L)[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])[None]
    idx = np.column_stack([a, b])
    return _scatter(local, idx, idx, (n, n))


def surface_load(density):
    """Nodal vector ``∫_Γ γ φ_a ds`` for continuous P1 hats ``φ_a`` on the loop."""
    loop = density.loop
    v0, v1 = density.values[:, 0], density.values[:, 1]
    L = loop.lengths
    out = L * (2.0 * v0 + v1) / 6.0
    out = out + np.roll(L * (v0 + 2.0 * v1) / 6.0, 1)
    return out


def normal_load(mesh, density):
    """Blockwise vector ``∫_Γ γ <n, φ_a e_c> ds`` over P1 vector hats on ``mesh``."""
    loop = density.loop
    if loop.vertices is None:
        raise ValueError("density loop is not attached to a mesh")
    n = mesh.n_vertices
    v0, v1 = density.values[:, 0], density.values[:, 1]
    L = loop.lengths
    start = L * (2.0 * v0 + v1) / 6.0
    end = L * (v0 + 2.0 * v1) / 6.0
    a = loop.vertices
    b = np.roll(loop.vertices, -1)
    out = np.zeros(2 * n)
    for c in range(2):
        np.add.at(out, a + c * n, start * loop.normals[:, c])
        np.add.at(out, b + c * n, end * loop.normals[:, c])
    return out


def assemble_surface_helmholtz(loop, A, density=None):
    """System ``(M + A K) α = ∫_Γ γ φ`` on the closed loop (no boundary)."""
    if not A > 0:
        raise ValueError("surface smoothing parameter A must be positive")
    M = surface_mass(loop) + A * surface_stiffness(loop)
    rhs = np.zeros(len(loop)) if density is None else surface_load(density)
    return SparseSystem(M, rhs, symmetric=True)


def l2_project(density, loop=None):
    """Continuous P1 nodal values ``ḡ`` with ``∫ ḡ φ = ∫ γ φ`` for every hat ``φ``."""
    loop = density.loop if loop is None else loop
    if density.loop is not loop and len(density.loop) != len(loop):
        raise ValueError("density and loop do not match")
    return solve(SparseSystem(surface_mass(loop), surface_load(density), symmetric=True))


__all__ = [
    "StokesAssembly", "SurfaceDensity", "assemble_elasticity", "assemble_poisson", "assemble_stokes",
    "assemble_surface_helmholtz", "l2_project", "normal_load", "p1_integrals", "p1_mass",
    "p1_stiffness", "surface_load", "surface_mass", "surface_stiffness", "velocity_dirichlet",
]
