"""Built-in mesh generators.

``channel_mesh`` builds an unstructured triangulation of a rectangle with a
polygonal hole by force-based smoothing of Delaunay triangulations (the
DistMesh scheme of Persson and Strang) with the boundary nodes held fixed.
The structured generators are small fixtures for verification studies.
"""
from __future__ import annotations

import numpy as np
from matplotlib.path import Path
from scipy.spatial import Delaunay, cKDTree

from .core import BoundaryMarker, MeshError, TriMesh, signed_areas


def regular_polygon(n, radius=1.0, center=(0.0, 0.0), phase=0.0):
    """Vertices of a regular ``n``-gon, counterclockwise."""
    theta = phase + 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)])


class _PolygonDistance:
    """Unsigned distance to a closed polygon and inside test."""

    def __init__(self, polygon):
        self.a = polygon
        self.ab = np.roll(polygon, -1, axis=0) - polygon
        self.tree = cKDTree(polygon + 0.5 * self.ab)
        self.k = min(8, len(polygon))
        self.path = Path(np.vstack([polygon, polygon[:1]]), closed=True)

    def distance(self, points):
        _, near = self.tree.query(points, k=self.k)
        a = self.a[near]
        ab = self.ab[near]
        ap = points[:, None, :] - a
        t = np.clip(np.einsum("pkj,pkj->pk", ap, ab) / np.einsum("pkj,pkj->pk", ab, ab), 0.0, 1.0)
        d = ap - t[..., None] * ab
        return np.sqrt(np.einsum("pkj,pkj->pk", d, d).min(axis=1))

    def inside(self, points):
        return self.path.contains_points(points)


def _place_along(a, b, size, h_at):
    """Points strictly between ``a`` and ``b`` spaced to follow ``h_at``."""
    s = np.linspace(0.0, 1.0, 2001)
    pts = a[None] + s[:, None] * (b - a)[None]
    length = np.linalg.norm(b - a)
    density = 1.0 / h_at(pts)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(s) * length)])
    nseg = max(1, int(np.ceil(cum[-1] * size)))
    targets = np.linspace(0.0, cum[-1], nseg + 1)[1:-1]
    si = np.interp(targets, cum, s)
    return a[None] + si[:, None] * (b - a)[None]


def channel_mesh(box=(-3.0, 6.0, -2.0, 2.0), obstacle=None, radius=0.5, n_obstacle=64,
                 h_max=0.4, grading=0.25, seed=0, max_iter=300, symmetric=False, center=(0.0, 0.0)):
    """Triangulate ``box`` minus a polygonal obstacle.

    Parameters
    ----------
    box : (xmin, xmax, ymin, ymax)
    obstacle : (n, 2) polygon vertices; defaults to a regular ``n_obstacle``-gon
        of the given ``radius`` around ``center``
    h_max : largest target edge length, reached far from the obstacle
    grading : growth rate of the target edge length with distance to the obstacle
    symmetric : mesh the upper half and mirror it, so that the triangulation is
        exactly symmetric about the horizontal line through ``center``; needs
        the default obstacle with even ``n_obstacle`` and a box symmetric about
        that line

    Left side is marked INFLOW, right OUTFLOW, top and bottom WALL.
    """
    x0, x1, y0, y1 = map(float, box)
    if obstacle is None:
        if radius <= 0:
            raise MeshError("obstacle radius must be positive")
        cx, cy = map(float, center)
        if radius >= min(cx - x0, x1 - cx, cy - y0, y1 - cy):
            raise MeshError(f"circle of radius {radius} does not fit inside the box {box}")
        obstacle = regular_polygon(n_obstacle, radius, center)
    elif symmetric:
        raise MeshError("symmetric meshing needs the built-in circular obstacle")
    obstacle = np.asarray(obstacle, dtype=float)
    if not (np.all(obstacle[:, 0] > x0) and np.all(obstacle[:, 0] < x1)
            and np.all(obstacle[:, 1] > y0) and np.all(obstacle[:, 1] < y1)):
        raise MeshError("obstacle polygon leaves the box")
    seg = np.linalg.norm(np.roll(obstacle, -1, axis=0) - obstacle, axis=1)
    h_min = float(seg.mean())
    clearance = min(obstacle[:, 0].min() - x0, x1 - obstacle[:, 0].max(),
                    obstacle[:, 1].min() - y0, y1 - obstacle[:, 1].max())
    if clearance < 2.0 * h_min:
        raise MeshError("obstacle is too close to the box boundary")

    poly = _PolygonDistance(obstacle)
    h_top = max(h_max, h_min)

    def h_at(p):
        return np.minimum(h_min + grading * poly.distance(p), h_top)

    def sdist(p):
        # negative inside the fluid domain
        drect = -np.minimum.reduce([p[:, 0] - x0, x1 - p[:, 0], p[:, 1] - y0, y1 - p[:, 1]])
        dob = poly.distance(p)
        dob = np.where(poly.inside(p), dob, -dob)
        return np.maximum(drect, dob)

    if symmetric:
        return _symmetric_channel(x0, x1, y0, y1, obstacle, n_obstacle, center, h_at, sdist, h_min, h_top,
                                  seed, max_iter)

    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    sides = [(corners[0], corners[1], BoundaryMarker.WALL),
             (corners[1], corners[2], BoundaryMarker.OUTFLOW),
             (corners[2], corners[3], BoundaryMarker.WALL),
             (corners[3], corners[0], BoundaryMarker.INFLOW)]
    outer, outer_edges, outer_marks = _chains(sides, h_at, closed=True)
    n_outer = len(outer)
    n_ob = len(obstacle)
    pfix = np.vstack([outer, obstacle])
    ob_edges = [(n_outer + i, n_outer + (i + 1) % n_ob) for i in range(n_ob)]
    pts, tri = _distmesh(pfix, sdist, h_at, (x0, x1, y0, y1), h_min, h_top, seed, max_iter)
    edges = np.array(outer_edges + ob_edges, dtype=np.int64)
    marks = outer_marks + [int(BoundaryMarker.OBSTACLE)] * n_ob
    try:
        return TriMesh.build(pts, tri, edges, marks)
    except MeshError as exc:
        raise MeshError(f"mesh generation failed: {exc}") from exc


def _chains(sides, h_at, closed):
    """Boundary points along consecutive segments and the edges joining them."""
    pts, edges, marks = [], [], []
    for a, b, mark in sides:
        chain = np.vstack([a[None], _place_along(a, b, 1.0, h_at)])
        base = sum(len(c) for c in pts)
        pts.append(chain)
        for i in range(len(chain)):
            edges.append((base + i, base + i + 1))
            marks.append(None if mark is None else int(mark))
    if not closed:
        pts.append(sides[-1][1][None])
    pts = np.vstack(pts)
    if closed:
        edges = [(a, b % len(pts)) for a, b in edges]
    return pts, edges, marks


def _symmetric_channel(x0, x1, y0, y1, obstacle, n_obstacle, center, h_at, sdist, h_min, h_top, seed, max_iter):
    cx, cy = map(float, center)
    if n_obstacle % 2:
        raise MeshError("symmetric meshing needs an even number of obstacle edges")
    if abs((y0 + y1) / 2.0 - cy) > 1e-12 * max(1.0, abs(y1 - y0)):
        raise MeshError("box is not symmetric about the obstacle centre line")
    half = n_obstacle // 2
    # upper obstacle arc from the right axis point to the left one, snapped to the axis
    arc = obstacle[:half + 1].copy()
    arc[[0, -1], 1] = cy
    right, left = arc[0], arc[-1]
    a, b = np.array([x0, cy]), np.array([x1, cy])
    c, d = np.array([x1, y1]), np.array([x0, y1])
    # boundary chain of the upper half: axis (unmarked), outflow, wall, inflow, axis
    sides = [(right, b, None), (b, c, BoundaryMarker.OUTFLOW), (c, d, BoundaryMarker.WALL),
             (d, a, BoundaryMarker.INFLOW), (a, left, None)]
    chain, chain_edges, chain_marks = _chains(sides, h_at, closed=False)
    n_chain = len(chain)
    inner = arc[1:-1][::-1]
    pfix = np.vstack([chain, inner])
    # obstacle edges of the upper arc, from the left axis point back to the right one
    arc_idx = [n_chain - 1] + list(range(n_chain, n_chain + len(inner))) + [0]
    ob_edges = [(arc_idx[i], arc_idx[i + 1]) for i in range(len(arc_idx) - 1)]

    def sdist_half(p):
        return np.maximum(sdist(p), cy - p[:, 1])

    pts, tri = _distmesh(pfix, sdist_half, h_at, (x0, x1, cy, y1), h_min, h_top, seed, max_iter)
    on_axis = np.abs(pts[:, 1] - cy) <= 1e-12 * max(1.0, abs(y1 - y0))
    pts[on_axis, 1] = cy
    mirror = -np.ones(len(pts), dtype=np.int64)
    off = np.flatnonzero(~on_axis)
    mirror[on_axis] = np.flatnonzero(on_axis)
    mirror[off] = len(pts) + np.arange(len(off))
    lower = pts[off].copy()
    lower[:, 1] = 2.0 * cy - lower[:, 1]
    all_pts = np.vstack([pts, lower])
    all_tri = np.vstack([tri, mirror[tri][:, ::-1]])
    edges, marks = [], []
    for (i, j), m in zip(chain_edges, chain_marks):
        if m is not None:
            edges += [(i, j), (mirror[j], mirror[i])]
            marks += [m, m]
    for i, j in ob_edges:
        edges += [(i, j), (mirror[j], mirror[i])]
        marks += [int(BoundaryMarker.OBSTACLE)] * 2
    try:
        return TriMesh.build(all_pts, all_tri, np.array(edges, dtype=np.int64), marks)
    except MeshError as exc:
        raise MeshError(f"mesh generation failed: {exc}") from exc


def _distmesh(pfix, sdist, h_at, bbox, h_min, h_top, seed, max_iter):
    """Force-equilibrium smoothing of interior points around the fixed
    boundary points ``pfix``; returns points (fixed ones first) and triangles."""
    x0, x1, y0, y1 = bbox
    # initial interior points: hexagonal lattices of doubling spacing, each
    # used where the target size falls in its band, thinned to the target density
    rng = np.random.default_rng(seed)
    chunks = []
    spacing = h_min
    while True:
        ys = np.arange(y0, y1 + spacing, spacing * np.sqrt(3.0) / 2.0)
        xs = np.arange(x0, x1 + spacing, spacing)
        gx, gy = np.meshgrid(xs, ys)
        gx = gx + (np.arange(len(ys))[:, None] % 2) * spacing / 2.0
        cand = np.column_stack([gx.ravel(), gy.ravel()])
        hc = h_at(cand)
        last = 2.0 * spacing > h_top
        band = ((hc >= spacing) | (spacing == h_min)) & ((hc < 2.0 * spacing) | last)
        cand, hc = cand[band], hc[band]
        cand = cand[sdist(cand) < -0.5 * hc]
        hc = h_at(cand)
        chunks.append(cand[rng.random(len(cand)) < (spacing / hc) ** 2])
        if last:
            break
        spacing *= 2.0
    p = np.vstack(chunks)

    nfix = len(pfix)
    deltat, fscale, ttol, dptol = 0.2, 1.2, 0.1, 1e-3
    pts = np.vstack([pfix, p])
    old = np.full_like(pts, np.inf)
    tri = None
    for _ in range(max_iter):
        if tri is None or np.max(np.linalg.norm(pts - old, axis=1) / h_at(pts)) > ttol:
            old = pts.copy()
            tri = _fluid_triangles(pts, sdist, h_min)
            bars = np.unique(np.sort(tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1), axis=0)
        vec = pts[bars[:, 0]] - pts[bars[:, 1]]
        length = np.linalg.norm(vec, axis=1)
        hbar = h_at(0.5 * (pts[bars[:, 0]] + pts[bars[:, 1]]))
        l0 = hbar * fscale * np.sqrt(np.sum(length ** 2) / np.sum(hbar ** 2))
        force = np.maximum(l0 - length, 0.0)
        fvec = (force / length)[:, None] * vec
        ftot = np.zeros_like(pts)
        np.add.at(ftot, bars[:, 0], fvec)
        np.add.at(ftot, bars[:, 1], -fvec)
        ftot[:nfix] = 0.0
        move = deltat * ftot
        pts = pts + move
        # pull escaped interior points back inside
        free = np.arange(nfix, len(pts))
        hq = h_at(pts[free])
        d = sdist(pts[free])
        out = d > -0.3 * hq
        if np.any(out):
            idx = free[out]
            eps = 1e-7 * h_min
            q = pts[idx]
            dq = d[out]
            gxd = (sdist(q + [eps, 0.0]) - dq) / eps
            gyd = (sdist(q + [0.0, eps]) - dq) / eps
            shift = (dq + 0.3 * hq[out])[:, None] * np.column_stack([gxd, gyd])
            pts[idx] = q - shift
        if np.max(np.linalg.norm(move[nfix:], axis=1) / h_at(pts[nfix:])) < dptol:
            break

    tri = _fluid_triangles(pts, sdist, h_min)
    used = np.unique(tri)
    if not np.all(np.isin(np.arange(nfix), used)):
        raise MeshError("generated triangulation lost a boundary node")
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return pts[used], remap[tri]


def _fluid_triangles(pts, sdist, h_min):
    tri = Delaunay(pts).simplices.astype(np.int64)
    cent = pts[tri].mean(axis=1)
    tri = tri[sdist(cent) < -1e-3 * h_min]
    area = np.abs(signed_areas(pts, tri))
    return tri[area > 1e-12 * h_min ** 2]


def rectangle_mesh(x0, x1, y0, y1, nx, ny, markers=None, perturb=0.0, seed=0):
    """Structured ``nx`` x ``ny`` grid split into right triangles.

    ``markers`` maps side names ``left``, ``right``, ``bottom``, ``top`` to
    boundary markers (default: all WALL). ``perturb`` jitters interior nodes
    by that fraction of the cell size.
    """
    sides = {"left": BoundaryMarker.WALL, "right": BoundaryMarker.WALL,
             "bottom": BoundaryMarker.WALL, "top": BoundaryMarker.WALL}
    sides.update(markers or {})
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    if perturb:
        rng = np.random.default_rng(seed)
        inner = idx[1:-1, 1:-1].ravel()
        h = min((x1 - x0) / nx, (y1 - y0) / ny)
        pts[inner] += perturb * h * rng.uniform(-1, 1, size=(len(inner), 2))
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    tri = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    edges, marks = [], []
    for name, chain in (("bottom", idx[:, 0]), ("right", idx[-1, :]),
                        ("top", idx[::-1, -1]), ("left", idx[0, ::-1])):
        for i in range(len(chain) - 1):
            edges.append((chain[i], chain[i + 1]))
            marks.append(int(BoundaryMarker.parse(sides[name])))
    return TriMesh.build(pts, tri, edges, marks)


def annulus_mesh(r_inner, r_outer, n_theta, n_radial, outer_marker=BoundaryMarker.WALL):
    """Structured annulus; inner circle OBSTACLE, outer circle ``outer_marker``."""
    radii = np.linspace(r_inner, r_outer, n_radial + 1)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    pts = np.array([[r * np.cos(t), r * np.sin(t)] for r in radii for t in theta])
    idx = np.arange(len(pts)).reshape(n_radial + 1, n_theta)
    tri = []
    for i in range(n_radial):
        for j in range(n_theta):
            jn = (j + 1) % n_theta
            a, b, c, d = idx[i, j], idx[i, jn], idx[i + 1, jn], idx[i + 1, j]
            tri += [(a, b, c), (a, c, d)]
    edges = [(idx[0, j], idx[0, (j + 1) % n_theta]) for j in range(n_theta)]
    edges += [(idx[-1, j], idx[-1, (j + 1) % n_theta]) for j in range(n_theta)]
    marks = [int(BoundaryMarker.OBSTACLE)] * n_theta + [int(BoundaryMarker.parse(outer_marker))] * n_theta
    return TriMesh.build(pts, tri, edges, marks)
