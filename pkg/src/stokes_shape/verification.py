"""Oracle checks shared by the ``verify`` command and the test suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import SurfaceDensity, p1_values, p2_values, triangle_rule
from .mesh import BoundaryMarker, ObstacleLoop, apply_displacement, obstacle_loop, rectangle_mesh
from .metrics import LAPLACE_BELTRAMI, STEKLOV_POINCARE, MetricConfig, MetricContext, TangentVector, compute_mu_field
from .optimizer import ShapeProblem
from .shape_calculus import AlParameters, barycenter, pairing, polygon_centroid, shoelace_area, volume
from .stokes import parabolic_inflow, solve_stokes


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# -- Stokes discretization ------------------------------------------------------------------

def manufactured_velocity(x):
    """Divergence-free, non-polynomial exact solution of ``Δv + ∇p = 0``."""
    x = np.atleast_2d(x)
    e = np.exp(x[:, 0])
    return np.column_stack([x[:, 0] * e * np.cos(x[:, 1]), -(1.0 + x[:, 0]) * e * np.sin(x[:, 1])])


def manufactured_pressure(x):
    x = np.atleast_2d(x)
    return -2.0 * np.exp(x[:, 0]) * np.cos(x[:, 1])


def l2_errors(solution, velocity, pressure, degree=6):
    """L2 errors of velocity and of mean-free pressure against exact callables."""
    mesh = solution.mesh
    pts, w = triangle_rule(degree)
    corners = mesh.vertices[mesh.triangles]
    lam = p1_values(pts)
    xq = np.einsum("qi,tid->tqd", lam, corners)
    jw = 2.0 * mesh.areas[:, None] * w[None, :]
    phi2 = p2_values(pts)
    vdofs = solution.velocity.space.cell_dofs
    vh = np.stack([np.einsum("tj,qj->tq", solution.velocity.component(k)[vdofs], phi2) for k in range(2)], -1)
    ve = velocity(xq.reshape(-1, 2)).reshape(vh.shape)
    ev = np.sqrt(np.sum(jw * np.sum((vh - ve) ** 2, axis=-1)))
    ph = np.einsum("tj,qj->tq", solution.pressure.coefficients[mesh.triangles], lam)
    pe = pressure(xq.reshape(-1, 2)).reshape(ph.shape)
    total = jw.sum()
    pe = pe - np.sum(jw * pe) / total
    ph = ph - np.sum(jw * ph) / total
    ep = np.sqrt(np.sum(jw * (ph - pe) ** 2))
    return float(ev), float(ep)


def convergence_study(levels=(4, 8, 16)):
    """Errors and observed orders of the manufactured solution on [0,1]x[-1,1]."""
    ev, ep = [], []
    for n in levels:
        mesh = rectangle_mesh(0.0, 1.0, -1.0, 1.0, n, 2 * n)
        sol = solve_stokes(mesh, boundary_velocity=manufactured_velocity)
        a, b = l2_errors(sol, manufactured_velocity, manufactured_pressure)
        ev.append(a)
        ep.append(b)
    ratio = np.array(levels[1:], float) / np.array(levels[:-1], float)
    ov = np.log(np.array(ev[:-1]) / np.array(ev[1:])) / np.log(ratio)
    op = np.log(np.array(ep[:-1]) / np.array(ep[1:])) / np.log(ratio)
    return {"velocity_errors": ev, "pressure_errors": ep, "velocity_orders": ov.tolist(),
            "pressure_orders": op.tolist()}


def poiseuille_dissipation(n=8):
    """Dissipation of the Poiseuille channel [0,1]x[-1,1] (exact value 8/3)."""
    mesh = rectangle_mesh(0.0, 1.0, -1.0, 1.0, n, 2 * n,
                          markers={"left": BoundaryMarker.INFLOW, "right": BoundaryMarker.OUTFLOW})
    return solve_stokes(mesh, parabolic_inflow(1.0, -1.0, 1.0)).dissipation


def check_stokes(levels=(4, 8, 16), min_velocity_order=2.8, min_pressure_order=1.8):
    study = convergence_study(levels)
    ov, op = min(study["velocity_orders"]), min(study["pressure_orders"])
    J = poiseuille_dissipation(levels[-1])
    rel = abs(J - 8.0 / 3.0) / (8.0 / 3.0)
    ok = ov >= min_velocity_order and op >= min_pressure_order and rel <= 1e-3
    return CheckResult("stokes convergence", ok,
                       f"velocity order {ov:.3f}, pressure order {op:.3f}, Poiseuille J rel. error {rel:.2e}")


# -- shape derivative ------------------------------------------------------------------------

def smooth_boundary_field(loop, rng, modes=3):
    """Random trigonometric vector field on the loop vertices, max norm 1."""
    c = loop.points.mean(axis=0)
    theta = np.arctan2(loop.points[:, 1] - c[1], loop.points[:, 0] - c[0])
    out = np.zeros((len(loop), 2))
    for k in range(modes + 1):
        a = rng.standard_normal((2, 2))
        out += a[0] * np.cos(k * theta)[:, None] + a[1] * np.sin(k * theta)[:, None]
    return out / np.abs(out).max()


def directional_derivative_errors(mesh, inflow, params=None, n_directions=5, h=1e-4, seed=0,
                                  objective_sign=1.0, metric=None):
    """Relative errors between central differences of ``L_A`` and the
    boundary-integral derivative, one per random smooth direction."""
    metric = metric or MetricConfig()
    params = params or AlParameters([0.3, -0.2, -25.0], 100.0)
    problem = ShapeProblem(mesh, inflow, metric, objective_sign=objective_sign)
    base = problem.evaluate(mesh, params)
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(n_directions):
        vb = smooth_boundary_field(base.loop, rng)
        ext = base.context.extend_displacement(vb)
        disp = np.column_stack([ext[:mesh.n_vertices], ext[mesh.n_vertices:]])
        plus = problem.evaluate(apply_displacement(mesh, disp, h).mesh, params).L_A
        minus = problem.evaluate(apply_displacement(mesh, disp, -h).mesh, params).L_A
        fd = (plus - minus) / (2.0 * h)
        predicted = pairing(base.density, vb)
        errors.append(abs(fd - predicted) / abs(fd))
    return errors


def check_shape_derivative(mesh, inflow, tol=5e-2, objective_sign=1.0, **kw):
    err = directional_derivative_errors(mesh, inflow, objective_sign=objective_sign, **kw)
    return CheckResult("shape derivative (finite differences)", max(err) <= tol,
                       f"max relative error {max(err):.3e} over {len(err)} directions (tol {tol:g})")


# -- geometry ------------------------------------------------------------------------------

def random_star_polygon(rng):
    n = int(rng.integers(3, 200))
    theta = np.sort(rng.uniform(0.0, 2.0 * np.pi, n))
    if np.ptp(theta) < np.pi:
        theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    r = 1.0 + 0.4 * sum(rng.uniform(-1, 1) * np.cos(k * theta + rng.uniform(0, 2 * np.pi)) / k
                        for k in range(1, 5))
    r = np.maximum(r, 0.05) * rng.uniform(0.1, 10.0)
    return rng.uniform(-5, 5, 2) + np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def geometry_errors(n_polygons=100, seed=0):
    """Largest relative deviations of boundary-integral volume and barycenter
    from the shoelace area and polygon centroid."""
    rng = np.random.default_rng(seed)
    ev = eb = 0.0
    for _ in range(n_polygons):
        pts = random_star_polygon(rng)
        loop = ObstacleLoop.from_polygon(pts)
        a = shoelace_area(pts)
        c = polygon_centroid(pts)
        ev = max(ev, abs(volume(loop) - a) / a)
        eb = max(eb, np.abs(barycenter(loop) - c).max() / np.abs(c).max())
    return ev, eb


def check_geometry(n_polygons=100, seed=0, tol=1e-12):
    ev, eb = geometry_errors(n_polygons, seed)
    return CheckResult("boundary-integral volume/barycenter", max(ev, eb) <= tol,
                       f"volume {ev:.2e}, barycenter {eb:.2e} over {n_polygons} polygons")


# -- Riesz maps ------------------------------------------------------------------------------

def riesz_errors(mesh, kind, n_tests=10, seed=0, lame=None):
    """Relative errors of ``g(riesz(γ), w) = ∫_Γ γ <w, n> ds`` for random ``γ`` and ``w``."""
    cfg = MetricConfig(kind)
    lame = lame or compute_mu_field(mesh, cfg.mu_min, cfg.mu_max, cfg.lambda_elas)
    loop = obstacle_loop(mesh)
    ctx = MetricContext(mesh, cfg, lame, loop)
    rng = np.random.default_rng(seed)
    gamma = SurfaceDensity(loop, rng.standard_normal((len(loop), 2)))
    grad = ctx.riesz(gamma)
    errors = []
    free = np.ones(2 * mesh.n_vertices, bool)
    free[np.concatenate([mesh.outer_vertices, mesh.outer_vertices + mesh.n_vertices])] = False
    for _ in range(n_tests):
        if cfg.kind == STEKLOV_POINCARE:
            w = TangentVector(STEKLOV_POINCARE, np.where(free, rng.standard_normal(2 * mesh.n_vertices), 0.0))
        else:
            w = TangentVector(LAPLACE_BELTRAMI, rng.standard_normal(len(loop)))
        lhs = ctx.inner(grad, w)
        rhs = ctx.pairing(gamma, w)
        errors.append(abs(lhs - rhs) / abs(rhs))
    return errors


def check_riesz(mesh, tol=1e-8, n_tests=10, seed=0):
    out = []
    for kind in (STEKLOV_POINCARE, LAPLACE_BELTRAMI):
        err = riesz_errors(mesh, kind, n_tests, seed)
        out.append(CheckResult(f"Riesz property ({kind})", max(err) <= tol, f"max relative error {max(err):.2e}"))
    return out
