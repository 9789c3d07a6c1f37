from math import factorial

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from stokes_shape.fem import (Factorization, FunctionSpace, LinearSolveError, SparseSystem, SurfaceDensity,
                              apply_dirichlet, assemble_elasticity, assemble_poisson, assemble_stokes,
                              assemble_surface_helmholtz, edge_rule, export_matrix_market, l2_project,
                              normal_load, p1_integrals, p1_mass, p1_stiffness, p2_values, solve,
                              surface_load, surface_mass, surface_stiffness, triangle_rule)
from stokes_shape.fem.quadrature import MAX_DEGREE
from stokes_shape.mesh import BoundaryMarker, ObstacleLoop, obstacle_loop, rectangle_mesh, regular_polygon


class TestQuadrature:
    @pytest.mark.parametrize("degree", range(0, MAX_DEGREE + 1))
    def test_triangle_monomials_exact(self, degree):
        pts, w = triangle_rule(degree)
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                exact = factorial(a) * factorial(b) / factorial(a + b + 2)
                assert np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b) == pytest.approx(exact, rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize("degree", range(0, MAX_DEGREE + 1))
    def test_edge_monomials_exact(self, degree):
        pts, w = edge_rule(degree)
        for k in range(degree + 1):
            assert np.sum(w * pts ** k) == pytest.approx(1.0 / (k + 1), rel=1e-13)

    def test_points_inside_reference_triangle(self):
        for d in range(MAX_DEGREE + 1):
            pts, w = triangle_rule(d)
            assert np.all(w > 0)
            assert np.all(pts >= 0) and np.all(pts.sum(axis=1) <= 1)

    def test_unsupported_degree(self):
        with pytest.raises(ValueError):
            triangle_rule(MAX_DEGREE + 1)
        with pytest.raises(ValueError):
            edge_rule(-1)


class TestShapeFunctions:
    @given(st.floats(0, 1), st.floats(0, 1))
    def test_p2_partition_of_unity(self, x, y):
        if x + y > 1:
            x, y = 1 - x, 1 - y
        assert p2_values([[x, y]]).sum() == pytest.approx(1.0, abs=1e-14)

    def test_p2_nodal_property(self):
        nodes = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]])
        np.testing.assert_allclose(p2_values(nodes), np.eye(6), atol=1e-15)

    def test_p2_space_counts(self):
        m = rectangle_mesh(0, 1, 0, 1, 3, 2)
        V = FunctionSpace(m, 2, 2)
        assert V.n_scalar == m.n_vertices + len(m.edges)
        assert V.n_dofs == 2 * V.n_scalar
        with pytest.raises(ValueError):
            FunctionSpace(m, 3)


@pytest.fixture(scope="module")
def mesh():
    return rectangle_mesh(0.0, 2.0, -1.0, 1.0, 6, 5, perturb=0.3, seed=1)


@pytest.fixture(scope="module")
def loop():
    return ObstacleLoop.from_polygon(regular_polygon(40, 1.3, (0.2, -0.1)))


class TestVolumeForms:
    def test_stiffness_annihilates_constants_and_linears(self, mesh):
        K = p1_stiffness(mesh)
        assert abs(K - K.T).max() < 1e-14
        np.testing.assert_allclose(K @ np.ones(mesh.n_vertices), 0.0, atol=1e-13)
        x = mesh.vertices[:, 0]
        # energy of a linear function equals |grad|^2 times the area
        assert x @ K @ x == pytest.approx(4.0, rel=1e-12)

    def test_mass_and_integrals(self, mesh):
        M = p1_mass(mesh)
        one = np.ones(mesh.n_vertices)
        assert one @ M @ one == pytest.approx(4.0, rel=1e-13)
        np.testing.assert_allclose(M @ one, p1_integrals(mesh), rtol=1e-13)
        y = mesh.vertices[:, 1]
        assert y @ M @ y == pytest.approx(2.0 * 2.0 / 3.0, rel=1e-12)

    def test_poisson_constant_data(self):
        m = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 5, 5, perturb=0.3, seed=2,
                           markers={"left": "inflow", "right": "outflow"})
        sol = solve(assemble_poisson(m, {"inflow": 2.0, "outflow": 2.0, "wall": 2.0}))
        np.testing.assert_allclose(sol, 2.0, atol=1e-12)

    def test_poisson_with_source(self):
        # -Δu = 2 on the unit square, u = 0 on the boundary; compare with a fine-grid value
        fine = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 64, 64)
        coarse = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 32, 32)
        mid = []
        for m in (coarse, fine):
            u = solve(assemble_poisson(m, {"wall": 0.0}, 2.0 * p1_integrals(m)))
            mid.append(u[np.argmin(np.linalg.norm(m.vertices - 0.5, axis=1))])
        # series value of the center deflection: 0.1473427...
        assert mid[1] == pytest.approx(0.14734, abs=2e-4)
        assert abs(mid[1] - 0.1473427) < abs(mid[0] - 0.1473427)

    def test_poisson_requires_all_markers(self):
        m = rectangle_mesh(0, 1, 0, 1, 2, 2, markers={"left": "inflow"})
        with pytest.raises(ValueError, match="no Dirichlet value"):
            assemble_poisson(m, {"wall": 0.0})

    def test_elasticity_kernel_is_rigid_motions(self, mesh):
        mu = 1.0 + mesh.vertices[:, 0] ** 2
        K = assemble_elasticity(mesh, mu, 0.7)
        n = mesh.n_vertices
        x, y = mesh.vertices.T
        for u in (np.r_[np.ones(n), np.zeros(n)], np.r_[np.zeros(n), np.ones(n)], np.r_[-y, x]):
            np.testing.assert_allclose(K @ u, 0.0, atol=1e-12)
        assert abs(K - K.T).max() < 1e-12

    def test_elasticity_energy_of_affine_field(self, mesh):
        n = mesh.n_vertices
        x, y = mesh.vertices.T
        # U = (a x + b y, c x + d y), constant mu and lambda
        a, b, c, d, mu, lam = 0.3, -0.2, 0.5, 0.1, 2.0, 1.5
        u = np.r_[a * x + b * y, c * x + d * y]
        eps = np.array([[a, 0.5 * (b + c)], [0.5 * (b + c), d]])
        density = 2 * mu * np.sum(eps * eps) + lam * np.trace(eps) ** 2
        K = assemble_elasticity(mesh, np.full(n, mu), lam)
        assert u @ K @ u == pytest.approx(density * 4.0, rel=1e-12)

    def test_elasticity_rejects_nonpositive_mu(self, mesh):
        with pytest.raises(ValueError):
            assemble_elasticity(mesh, np.zeros(mesh.n_vertices))


class TestLinearAlgebra:
    def test_dirichlet_elimination_is_symmetric(self, rng):
        A = sp.random(12, 12, density=0.4, random_state=3)
        A = sp.csr_matrix(A + A.T + 12 * sp.eye(12))
        b = rng.standard_normal(12)
        K, rhs = apply_dirichlet(A, b, [0, 5], [1.0, -2.0])
        assert abs(K - K.T).max() == 0.0
        x = Factorization(K).solve(rhs)
        assert x[0] == 1.0 and x[5] == -2.0
        free = np.setdiff1d(np.arange(12), [0, 5])
        np.testing.assert_allclose((A @ x - b)[free], 0.0, atol=1e-11)

    def test_singular_matrix_reported(self):
        with pytest.raises(LinearSolveError):
            solve(SparseSystem(sp.csr_matrix((3, 3)), np.ones(3)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            SparseSystem(sp.eye(3), np.ones(2))

    def test_matrix_market_export(self, tmp_path):
        m = rectangle_mesh(0, 1, 0, 1, 3, 3)
        system = assemble_poisson(m, {"wall": 0.0})
        export_matrix_market(system, tmp_path / "k.mtx")
        back = sp.csr_matrix(scipy.io.mmread(tmp_path / "k.mtx"))
        assert abs(back - system.matrix).max() < 1e-14

    def test_stokes_system_is_symmetric(self):
        m = rectangle_mesh(0, 1, 0, 1, 3, 3)
        asm = assemble_stokes(m, boundary_velocity=lambda x: np.zeros_like(x))
        M = asm.system.matrix
        assert abs(M - M.T).max() < 1e-13


class TestSurfaceForms:
    def test_mass_and_stiffness(self, loop):
        M, K = surface_mass(loop), surface_stiffness(loop)
        one = np.ones(len(loop))
        assert one @ M @ one == pytest.approx(loop.perimeter, rel=1e-14)
        np.testing.assert_allclose(K @ one, 0.0, atol=1e-12)

    def test_surface_load_matches_mass(self, loop, rng):
        g = rng.standard_normal(len(loop))
        dens = SurfaceDensity.from_nodal(loop, g)
        np.testing.assert_allclose(surface_load(dens), surface_mass(loop) @ g, rtol=1e-12)
        np.testing.assert_allclose(l2_project(dens), g, rtol=1e-10)

    def test_projection_of_discontinuous_density_preserves_integral(self, loop, rng):
        dens = SurfaceDensity(loop, rng.standard_normal((len(loop), 2)))
        proj = l2_project(dens)
        assert np.ones(len(loop)) @ surface_mass(loop) @ proj == pytest.approx(dens.integral(), rel=1e-10)

    def test_density_algebra(self, loop):
        c = SurfaceDensity.constant(loop, 2.0)
        assert c.integral() == pytest.approx(2.0 * loop.perimeter)
        assert (c + (-c) * 0.5).l2_norm() == pytest.approx(np.sqrt(loop.perimeter))
        with pytest.raises(ValueError):
            SurfaceDensity(loop, np.zeros((3, 2)))

    def test_helmholtz_requires_positive_A(self, loop):
        with pytest.raises(ValueError):
            assemble_surface_helmholtz(loop, 0.0)

    def test_normal_load_of_constant_is_zero_force(self, coarse_mesh):
        loop = obstacle_loop(coarse_mesh)
        f = normal_load(coarse_mesh, SurfaceDensity.constant(loop, 1.0))
        n = coarse_mesh.n_vertices
        # the closed polygon has zero total normal
        assert abs(f[:n].sum()) < 1e-13 and abs(f[n:].sum()) < 1e-13
        # pairing with the identity field recovers twice the enclosed area
        x, y = coarse_mesh.vertices.T
        area = 0.5 * abs(np.sum(loop.points[:, 0] * np.roll(loop.points[:, 1], -1)
                                - np.roll(loop.points[:, 0], -1) * loop.points[:, 1]))
        assert f @ np.r_[x, y] == pytest.approx(2.0 * area, rel=1e-12)
