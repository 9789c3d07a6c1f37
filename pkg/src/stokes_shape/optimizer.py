"""Limited-memory BFGS on the shape manifold inside an augmented Lagrangian loop.

Retraction is node displacement and vector transport is the identity on
stored coefficient vectors: memory pairs recorded at earlier iterates are
reused as-is, with inner products evaluated on the current mesh.
"""
from __future__ import annotations

import enum
import logging
import time
from collections import deque
from dataclasses import dataclass, field, fields

import numpy as np

from .mesh import apply_displacement, element_quality, obstacle_loop
from .metrics import MetricConfig, MetricContext, compute_mu_field
from .shape_calculus import (AlParameters, GeometricReference, al_density, al_value, barycenter, constraint_densities,
                             constraints, polygon_centroid, shoelace_area, volume)
from .stokes import objective_density, solve_stokes

log = logging.getLogger(__name__)


class Status(enum.Enum):
    CONVERGED = "converged"
    MESH_INVALID = "mesh_invalid"
    ITERATION_CAP = "iteration_cap"
    LINE_SEARCH_FAILED = "line_search_failed"


@dataclass(frozen=True)
class OptimizerConfig:
    metric: MetricConfig = field(default_factory=MetricConfig)
    memory: int = 3
    step_tol: float = 1e-4
    constraint_tol: float | None = None
    penalty: float = 100.0
    penalty_increase: float = 10.0
    keep_memory: bool = True
    multiplier_tol: float | None = None
    max_inner: int = 200
    max_outer: int = 20
    initial_scale: float = 1.0
    max_step: float = 0.05
    backtrack: float = 0.5
    max_backtracks: int = 20
    quality_cap: float = 100.0
    armijo: float = 1e-4

    def __post_init__(self):
        checks = [("memory", self.memory >= 0, "must be >= 0"),
                  ("step_tol", self.step_tol > 0, "must be positive"),
                  ("constraint_tol", self.constraint_tol is None or self.constraint_tol > 0, "must be positive"),
                  ("multiplier_tol", self.multiplier_tol is None or self.multiplier_tol > 0, "must be positive"),
                  ("penalty", self.penalty > 0, "must be positive"),
                  ("penalty_increase", self.penalty_increase > 1, "must exceed 1"),
                  ("backtrack", 0 < self.backtrack < 1, "must lie in (0, 1)"),
                  ("max_inner", self.max_inner >= 1, "must be positive"),
                  ("max_outer", self.max_outer >= 1, "must be positive"),
                  ("max_backtracks", self.max_backtracks >= 0, "must be >= 0")]
        for name, ok, message in checks:
            if not ok:
                raise ValueError(f"{name}: {message}")


@dataclass
class IterationRecord:
    iter: int
    J: float
    L_A: float
    c_norm: float
    worst_quality: float
    step_norm: float
    scale: float
    seconds: float
    direction_norm: float = 0.0
    tangential_norm: float = 0.0
    outer: int = 0

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return [getattr(self, c) for c in self.columns()]


# -- L-BFGS ----------------------------------------------------------------------------

class LbfgsMemory:
    """At most ``capacity`` curvature pairs ``(s, y, 1/g(y, s))``, oldest evicted first."""

    def __init__(self, capacity):
        self.capacity = int(capacity)
        self.pairs = deque(maxlen=max(self.capacity, 1))

    def __len__(self):
        return len(self.pairs) if self.capacity > 0 else 0

    def __iter__(self):
        return iter(self.pairs if self.capacity > 0 else ())

    def clear(self):
        self.pairs.clear()

    def push(self, s, y, inner):
        """Store the pair if it satisfies the curvature condition; return whether it did."""
        if self.capacity == 0:
            return False
        sy = inner(y, s)
        if not sy > 0:
            return False
        self.pairs.append((s, y, 1.0 / sy))
        return True


def lbfgs_direction(gradient, memory, inner):
    """Two-loop recursion; returns ``gradient`` itself for an empty memory."""
    pairs = list(memory)
    q = gradient
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * inner(s, q)
        q = q - a * y
        alphas.append(a)
    if pairs:
        s, y, _ = pairs[-1]
        q = (inner(y, s) / inner(y, y)) * q
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * inner(y, q)
        q = q + (a - b) * s
    return q


# -- shape problem ---------------------------------------------------------------------

@dataclass(eq=False)
class ShapeIterate:
    mesh: object
    loop: object
    J: float
    c: np.ndarray
    L_A: float
    density: object
    context: MetricContext
    worst_quality: float
    solution: object = None
    _gradient: object = None

    @property
    def gradient(self):
        if self._gradient is None:
            self._gradient = self.context.riesz(self.density)
        return self._gradient


class ShapeProblem:
    """Augmented Lagrangian of the dissipation with barycenter/volume constraints."""

    def __init__(self, initial_mesh, inflow, metric, reference=None, lame=None, objective_sign=1.0,
                 debug=False):
        self.inflow = inflow
        self.metric = metric
        loop = obstacle_loop(initial_mesh)
        self.reference = GeometricReference.of(loop) if reference is None else reference
        self.lame = lame if lame is not None else compute_mu_field(
            initial_mesh, metric.mu_min, metric.mu_max, metric.lambda_elas)
        self.objective_sign = objective_sign
        self.debug = debug

    def evaluate(self, mesh, params, worst_quality=None):
        loop = obstacle_loop(mesh)
        sol = solve_stokes(mesh, self.inflow)
        vol, bc = volume(loop), barycenter(loop)
        if self.debug:
            ref_vol, ref_bc = shoelace_area(loop.points), polygon_centroid(loop.points)
            assert abs(vol - ref_vol) <= 1e-12 * ref_vol, "boundary-integral volume disagrees with shoelace"
            assert np.allclose(bc, ref_bc, rtol=0, atol=1e-12 * max(1.0, np.abs(ref_bc).max()))
        c = constraints(loop, self.reference)
        dens = al_density(objective_density(sol, loop), constraint_densities(loop, vol, bc), c, params,
                          objective_sign=self.objective_sign)
        if worst_quality is None:
            worst_quality = element_quality(mesh)[1]
        return ShapeIterate(mesh, loop, sol.dissipation, c, al_value(sol.dissipation, c, params), dens,
                            MetricContext(mesh, self.metric, self.lame, loop), worst_quality, sol)

    def constraints(self, mesh):
        return constraints(obstacle_loop(mesh), self.reference)

    def inner_solve(self, mesh, multipliers, penalty, config, memory=None, callback=None, start_iter=0,
                    outer=0, clock=None):
        return inner_solve(self, mesh, AlParameters(multipliers, penalty), config, memory, callback,
                           start_iter, outer, clock)


@dataclass
class StepResult:
    scale: float
    iterate: object
    status: Status
    trials: int


def step_control(problem, current, direction, slope, params, config, initial_scale):
    """Backtrack from ``initial_scale`` until the retracted mesh is valid, its
    worst quality is within the cap and the Armijo condition holds.

    The mesh moves by ``-scale * displacement(direction)``; ``slope`` is the
    metric pairing of direction and gradient (positive for descent). If the
    trial step shrinks below ``config.step_tol`` in L2(Γ) while the mesh is
    still admissible, the iterate is stationary to tolerance and the result
    has status ``CONVERGED`` with no iterate.
    """
    disp = current.context.displacement(direction)
    full_norm = current.context.boundary_norm(disp)
    t = initial_scale
    geometry_only = True
    for trial in range(config.max_backtracks + 1):
        moved = apply_displacement(current.mesh, disp, -t)
        if moved.valid and moved.worst_quality <= config.quality_cap:
            if t * full_norm < config.step_tol:
                return StepResult(0.0, None, Status.CONVERGED, trial + 1)
            cand = problem.evaluate(moved.mesh, params, moved.worst_quality)
            if cand.L_A <= current.L_A - config.armijo * t * slope:
                return StepResult(t, cand, Status.CONVERGED, trial + 1)
            geometry_only = False
        t *= config.backtrack
    status = Status.MESH_INVALID if geometry_only else Status.LINE_SEARCH_FAILED
    return StepResult(0.0, None, status, config.max_backtracks + 1)


@dataclass
class InnerResult:
    state: object
    status: Status
    records: list
    iterations: int
    iterate: object = None


def _initial_scale(context, q, config, steepest):
    """Scale 1 for quasi-Newton directions; steepest-descent trials start
    at a boundary displacement of at most ``config.max_step``."""
    if not steepest:
        return config.initial_scale
    peak = np.abs(context.displacement(q)[context.loop.vertices]).max()
    return config.max_step / peak if peak > 0 else config.initial_scale


def inner_solve(problem, mesh, params, config, memory=None, callback=None, start_iter=0, outer=0, clock=None):
    """Minimize the augmented Lagrangian for fixed multipliers and penalty.

    Stops when the L2(Γ) norm of the accepted step drops below
    ``config.step_tol``. A step that cannot be made without inverting or
    degrading elements ends the run with ``Status.MESH_INVALID`` and the
    last valid mesh.
    """
    clock = time.perf_counter() if clock is None else clock
    memory = LbfgsMemory(config.memory) if memory is None else memory
    cur = problem.evaluate(mesh, params)
    records = []
    for j in range(config.max_inner):
        ctx = cur.context
        grad = cur.gradient
        q = lbfgs_direction(grad, memory, ctx.inner)
        slope = ctx.inner(q, grad)
        if len(memory) and not slope > 0:
            log.info("memory direction is not a descent direction; resetting")
            memory.clear()
            q = grad
            slope = ctx.inner(q, grad)
        if not slope > 0:
            return InnerResult(cur.mesh, Status.CONVERGED, records, j, cur)
        steepest = len(memory) == 0
        step = step_control(problem, cur, q, slope, params, config, _initial_scale(ctx, q, config, steepest))
        if step.iterate is None and not steepest:
            log.info("quasi-Newton step rejected; retrying along the gradient")
            memory.clear()
            q = grad
            slope = ctx.inner(q, grad)
            step = step_control(problem, cur, q, slope, params, config, _initial_scale(ctx, q, config, True))
        if step.iterate is None and step.status is Status.CONVERGED:
            log.info("no decrease above the step tolerance at inner iteration %d; stationary", j)
            return InnerResult(cur.mesh, Status.CONVERGED, records, j, cur)
        if step.iterate is None:
            log.warning("no admissible step at inner iteration %d: %s", j, step.status.value)
            return InnerResult(cur.mesh, step.status, records, j, cur)
        new = step.iterate
        disp = -step.scale * ctx.displacement(q)
        step_norm = ctx.boundary_norm(disp)
        s = -step.scale * q
        memory.push(s, new.gradient - grad, new.context.inner)
        rec = IterationRecord(start_iter + j + 1, new.J, new.L_A, float(np.linalg.norm(new.c)), new.worst_quality,
                              step_norm, step.scale, time.perf_counter() - clock,
                              float(np.linalg.norm(q.coefficients)), ctx.tangential_norm(disp), outer)
        records.append(rec)
        log.info("iter %d  J=%.8g  L_A=%.8g  |c|=%.3e  quality=%.3f  step=%.3e  scale=%.3g",
                 rec.iter, rec.J, rec.L_A, rec.c_norm, rec.worst_quality, rec.step_norm, rec.scale)
        if callback is not None:
            callback(new, rec)
        cur = new
        if step_norm < config.step_tol:
            return InnerResult(cur.mesh, Status.CONVERGED, records, j + 1, cur)
    return InnerResult(cur.mesh, Status.ITERATION_CAP, records, config.max_inner, cur)


# -- augmented Lagrangian outer loop ---------------------------------------------------------

@dataclass
class AlResult:
    state: object
    status: Status
    multipliers: np.ndarray
    multiplier_history: list
    penalty: float
    records: list
    inner_iterations: list
    penalty_increases: int = 0


def augmented_lagrangian_loop(problem, state, config, multipliers=None, callback=None):
    """Outer multiplier loop: inner minimization, then either a penalty
    increase (constraint violation above tolerance) or ``λ ← λ + μ c``,
    until successive multipliers differ by less than ``multiplier_tol``."""
    state0 = state
    lam = np.zeros(len(problem.constraints(state0))) if multipliers is None else np.asarray(multipliers, float)
    mu = config.penalty
    tol_c = config.constraint_tol
    if tol_c is None:
        tol_c = default_constraint_tol(problem)
    memory = LbfgsMemory(config.memory)
    history = [lam.copy()]
    records, inner_counts = [], []
    increases = 0
    clock = time.perf_counter()
    for k in range(config.max_outer):
        res = problem.inner_solve(state, lam, mu, config, memory, callback,
                                  start_iter=len(records), outer=k + 1, clock=clock)
        records += res.records
        inner_counts.append(res.iterations)
        state = res.state
        if res.status is Status.MESH_INVALID or res.status is Status.LINE_SEARCH_FAILED:
            return AlResult(state, res.status, lam, history, mu, records, inner_counts, increases)
        c = np.asarray(problem.constraints(state), dtype=float)
        if np.linalg.norm(c) > tol_c:
            mu *= config.penalty_increase
            increases += 1
            memory.clear()
            log.info("outer %d: |c|=%.3e above %.3e, penalty -> %.3g", k + 1, np.linalg.norm(c), tol_c, mu)
            continue
        new = lam + mu * c
        history.append(new.copy())
        tol_lam = config.multiplier_tol if config.multiplier_tol is not None else default_multiplier_tol(problem, mu)
        done = np.linalg.norm(new - lam) < tol_lam
        log.info("outer %d: lambda=%s  |dlambda|=%.3e", k + 1, np.array2string(new, precision=6),
                 np.linalg.norm(new - lam))
        lam = new
        if not config.keep_memory:
            memory.clear()
        if done:
            return AlResult(state, Status.CONVERGED, lam, history, mu, records, inner_counts, increases)
    return AlResult(state, Status.ITERATION_CAP, lam, history, mu, records, inner_counts, increases)


def _reference_volume(problem):
    ref = getattr(problem, "reference", None)
    return ref.volume if ref is not None else 1.0


def default_constraint_tol(problem):
    """Violation above which the penalty grows: ``vol₀`` (1 without a reference shape)."""
    return DEFAULT_CONSTRAINT_TOL_FACTOR * _reference_volume(problem)


def default_multiplier_tol(problem, penalty):
    """Since ``λ⁺ - λ = μ c``, stopping at ``|Δλ| < μ · 1e-3 vol₀`` leaves ``|c| < 1e-3 vol₀``."""
    return DEFAULT_MULTIPLIER_TOL_FACTOR * _reference_volume(problem) * penalty


DEFAULT_CONSTRAINT_TOL_FACTOR = 1.0
DEFAULT_MULTIPLIER_TOL_FACTOR = 1e-3


# -- Euclidean adapter -------------------------------------------------------------------

class EuclideanProblem:
    """Smooth problem on R^n with equality constraints, solved by the same
    inner L-BFGS / Armijo machinery under the Euclidean inner product."""

    def __init__(self, objective, gradient, constraint, jacobian):
        self.objective = objective
        self.grad = gradient
        self.constraint = constraint
        self.jacobian = jacobian

    def constraints(self, x):
        return np.atleast_1d(np.asarray(self.constraint(x), dtype=float))

    def _lagrangian(self, x, lam, mu):
        c = self.constraints(x)
        value = self.objective(x) + lam @ c + 0.5 * mu * (c @ c)
        grad = self.grad(x) + np.atleast_2d(self.jacobian(x)).T @ (lam + mu * c)
        return value, grad

    def inner_solve(self, x, multipliers, penalty, config, memory=None, callback=None, start_iter=0,
                    outer=0, clock=None):
        memory = LbfgsMemory(config.memory) if memory is None else memory
        inner = lambda a, b: float(np.dot(a, b))
        x = np.asarray(x, dtype=float)
        f, g = self._lagrangian(x, multipliers, penalty)
        for j in range(config.max_inner):
            q = lbfgs_direction(g, memory, inner)
            slope = inner(q, g)
            if not slope > 0:
                memory.clear()
                q, slope = g, inner(g, g)
            if slope == 0:
                return InnerResult(x, Status.CONVERGED, [], j)
            t = config.initial_scale
            for _ in range(config.max_backtracks + 1):
                xn = x - t * q
                fn, gn = self._lagrangian(xn, multipliers, penalty)
                if fn <= f - config.armijo * t * slope:
                    break
                t *= config.backtrack
            else:
                return InnerResult(x, Status.LINE_SEARCH_FAILED, [], j)
            memory.push(xn - x, gn - g, inner)
            step = np.linalg.norm(xn - x)
            x, f, g = xn, fn, gn
            if step < config.step_tol:
                return InnerResult(x, Status.CONVERGED, [], j + 1)
        return InnerResult(x, Status.ITERATION_CAP, [], config.max_inner)


# -- shape distance ----------------------------------------------------------------------

class NotComparable(ValueError):
    """The normal rays of one shape do not meet the other within the search radius."""


def shape_distance(loop_a, loop_b, search_radius=None):
    """Integral over ``loop_a`` of the distance along each vertex normal to ``loop_b``."""
    if search_radius is None:
        search_radius = 0.25 * max(np.ptp(loop_a.points, axis=0).max(), 1e-300)
    p = loop_a.points
    nrm = loop_a.vertex_normals
    a = loop_b.points
    e = np.roll(a, -1, axis=0) - a
    # solve p + t n = a + u e for every (vertex, segment) pair
    det = nrm[:, None, 0] * (-e[None, :, 1]) - nrm[:, None, 1] * (-e[None, :, 0])
    rhs = a[None] - p[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rhs[..., 0] * (-e[None, :, 1]) - rhs[..., 1] * (-e[None, :, 0])) / det
        u = (nrm[:, None, 0] * rhs[..., 1] - nrm[:, None, 1] * rhs[..., 0]) / det
    hit = (np.abs(det) > 1e-14) & (u >= -1e-12) & (u <= 1 + 1e-12) & (np.abs(t) <= search_radius)
    dist = np.where(hit, np.abs(t), np.inf).min(axis=1)
    if not np.all(np.isfinite(dist)):
        raise NotComparable(f"{int(np.sum(~np.isfinite(dist)))} normal rays miss the other shape")
    return float(np.sum(loop_a.lengths * 0.5 * (dist + np.roll(dist, -1))))
