"""Triangle meshes of the flow domain with marked boundary segments."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    """Raised when mesh data violates a structural invariant."""


class BoundaryMarker(enum.IntEnum):
    INFLOW = 1
    OUTFLOW = 2
    WALL = 3
    OBSTACLE = 4

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown boundary marker {name!r}") from None


OUTER_MARKERS = (BoundaryMarker.INFLOW, BoundaryMarker.OUTFLOW, BoundaryMarker.WALL)

# unit-side equilateral reference triangle: columns are its edge vectors
_REF_EDGES = np.array([[1.0, 0.5], [0.0, np.sqrt(3.0) / 2.0]])
_REF_EDGES_INV = np.linalg.inv(_REF_EDGES)


def signed_areas(points, triangles):
    p0, p1, p2 = (points[triangles[:, k]] for k in range(3))
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _sorted_pairs(pairs):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return np.sort(pairs, axis=1)


def _freeze(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangle mesh with every boundary edge carrying a marker.

    Parameters
    ----------
    vertices : (N, 2) float array
    triangles : (T, 3) int array, counterclockwise
    boundary_edges : (B, 2) int array of vertex pairs
    boundary_markers : (B,) int array of :class:`BoundaryMarker` values
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _freeze(np.asarray(self.vertices, dtype=float).reshape(-1, 2)))
        object.__setattr__(self, "triangles", _freeze(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)))
        object.__setattr__(self, "boundary_edges", _freeze(np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)))
        object.__setattr__(self, "boundary_markers", _freeze(np.asarray(self.boundary_markers, dtype=np.int64).reshape(-1)))
        self._validate()

    @classmethod
    def build(cls, vertices, triangles, boundary_edges, boundary_markers):
        """Construct a mesh, first flipping clockwise triangles to counterclockwise."""
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        area = signed_areas(vertices, triangles)
        flip = area < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        markers = [int(BoundaryMarker.parse(m)) if not isinstance(m, (int, np.integer)) else int(m)
                   for m in boundary_markers]
        return cls(vertices, triangles, boundary_edges, markers)

    def _validate(self):
        nv = len(self.vertices)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nv):
            raise MeshError("triangle references a nonexistent vertex")
        if len(self.boundary_edges) != len(self.boundary_markers):
            raise MeshError("boundary edge and marker counts differ")
        valid = {int(m) for m in BoundaryMarker}
        bad = set(np.unique(self.boundary_markers).tolist()) - valid
        if bad:
            raise MeshError(f"unknown boundary marker values {sorted(bad)}")
        area = self.areas
        if np.any(area <= 0):
            k = int(np.argmin(area))
            raise MeshError(f"triangle {k} has nonpositive area {area[k]:.3e}")
        counts = self.edge_triangle_count
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        boundary = self.edges[counts == 1]
        marked = _sorted_pairs(self.boundary_edges)
        if len(np.unique(marked, axis=0)) != len(marked):
            raise MeshError("boundary edge marked twice")
        key = lambda e: set(map(tuple, e.tolist()))
        b, m = key(boundary), key(marked)
        if b - m:
            raise MeshError(f"unmarked boundary edge {sorted(b - m)[0]}")
        if m - b:
            raise MeshError(f"marked edge {sorted(m - b)[0]} is not a boundary edge")
        obst = marked[self.boundary_markers == BoundaryMarker.OBSTACLE]
        if len(obst):
            _chain_loop(obst)

    # -- topology ---------------------------------------------------------

    @cached_property
    def _edge_data(self):
        local = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        edges, inverse, counts = np.unique(np.sort(local, axis=1), axis=0,
                                           return_inverse=True, return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self):
        """(E, 2) sorted vertex pairs; deterministic given the mesh."""
        return self._edge_data[0]

    @property
    def triangle_edges(self):
        """(T, 3) edge index of local edges (v0,v1), (v1,v2), (v2,v0)."""
        return self._edge_data[1]

    @property
    def edge_triangle_count(self):
        return self._edge_data[2]

    @cached_property
    def areas(self):
        return signed_areas(self.vertices, self.triangles)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def marker_vertices(self, *markers):
        """Sorted unique vertex indices lying on edges with any of ``markers``."""
        sel = np.isin(self.boundary_markers, [int(m) for m in markers])
        return np.unique(self.boundary_edges[sel])

    def marker_edges(self, *markers):
        sel = np.isin(self.boundary_markers, [int(m) for m in markers])
        return self.boundary_edges[sel]

    @cached_property
    def outer_vertices(self):
        return self.marker_vertices(*OUTER_MARKERS)

    def with_vertices(self, vertices):
        return TriMesh(vertices, self.triangles, self.boundary_edges, self.boundary_markers)


def _chain_loop(edges):
    """Order undirected edges into one closed simple cycle of vertex indices."""
    edges = np.asarray(edges)
    nbrs = {}
    for a, b in edges.tolist():
        nbrs.setdefault(a, []).append(b)
        nbrs.setdefault(b, []).append(a)
    if any(len(v) != 2 for v in nbrs.values()):
        raise MeshError("obstacle edges do not form a closed simple loop")
    start = min(nbrs)
    order = [start]
    prev, cur = start, nbrs[start][0]
    while cur != start:
        order.append(cur)
        a, b = nbrs[cur]
        prev, cur = cur, (b if a == prev else a)
        if len(order) > len(edges):
            raise MeshError("obstacle loop traversal did not close")
    if len(order) != len(edges):
        raise MeshError("obstacle edges form more than one loop")
    return order


# -- quality ----------------------------------------------------------------

def triangle_quality(p0, p1, p2):
    """2-norm condition number of the affine map from the unit equilateral
    triangle onto each physical triangle. Degenerate triangles give ``inf``."""
    p0, p1, p2 = (np.atleast_2d(np.asarray(p, dtype=float)) for p in (p0, p1, p2))
    phys = np.stack([p1 - p0, p2 - p0], axis=-1)
    B = phys @ _REF_EDGES_INV
    fro2 = np.einsum("kij,kij->k", B, B)
    det = np.abs(B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0])
    disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        # sigma_max / sigma_min = sigma_max^2 / det
        q = (fro2 + disc) / (2.0 * det)
    q = np.where(det > 0, np.maximum(q, 1.0), np.inf)
    return q


def element_quality(mesh):
    """Per-triangle quality and the worst (largest) value."""
    t = mesh.triangles
    p = mesh.vertices
    q = triangle_quality(p[t[:, 0]], p[t[:, 1]], p[t[:, 2]])
    return q, float(q.max()) if len(q) else 1.0


# -- obstacle boundary ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObstacleLoop:
    """Closed polygon Γ traversed with the fluid on the left.

    Edge ``i`` runs from ``points[i]`` to ``points[(i+1) % n]``; its unit
    normal points out of the obstacle into the fluid.
    """

    points: np.ndarray
    vertices: np.ndarray | None = None
    fluid_triangles: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", _freeze(np.asarray(self.points, dtype=float).reshape(-1, 2)))
        if len(self.points) < 3:
            raise MeshError("a loop needs at least three vertices")

    @classmethod
    def from_polygon(cls, points):
        """Loop around the region enclosed by ``points`` (either orientation)."""
        pts = np.asarray(points, dtype=float)
        if _shoelace(pts) > 0:
            pts = pts[::-1]
        return cls(pts)

    def __len__(self):
        return len(self.points)

    @cached_property
    def edge_vectors(self):
        return np.roll(self.points, -1, axis=0) - self.points

    @cached_property
    def lengths(self):
        return np.hypot(self.edge_vectors[:, 0], self.edge_vectors[:, 1])

    @cached_property
    def normals(self):
        t = self.edge_vectors / self.lengths[:, None]
        return np.column_stack([-t[:, 1], t[:, 0]])

    @cached_property
    def vertex_normals(self):
        """Normalized mean of the two adjacent edge normals at each vertex."""
        n = self.normals + np.roll(self.normals, 1, axis=0)
        return n / np.linalg.norm(n, axis=1)[:, None]

    @property
    def perimeter(self):
        return float(self.lengths.sum())

    def edge_endpoints(self):
        """(n, 2, 2) array of the two endpoint coordinates of each edge."""
        return np.stack([self.points, np.roll(self.points, -1, axis=0)], axis=1)


def _shoelace(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def obstacle_loop(mesh):
    """Ordered obstacle boundary of ``mesh`` with fluid-pointing normals."""
    return boundary_loop(mesh, BoundaryMarker.OBSTACLE)


def boundary_loop(mesh, *markers):
    """Closed loop of the boundary edges carrying ``markers``, traversed with
    the fluid on the left; normals point into the fluid."""
    obst = mesh.marker_edges(*markers)
    if len(obst) == 0:
        raise MeshError(f"mesh has no boundary edges marked {[BoundaryMarker(m).name for m in markers]}")
    _chain_loop(np.sort(obst, axis=1))
    # orient each edge as it appears in its (counterclockwise) triangle
    t = mesh.triangles
    directed = {}
    for k, (a, b) in enumerate(t[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2).tolist()):
        directed[(a, b)] = k
    succ, tri_of = {}, {}
    for a, b in obst.tolist():
        if (a, b) in directed:
            succ[a] = b
            tri_of[a] = directed[(a, b)] // 3
        elif (b, a) in directed:
            succ[b] = a
            tri_of[b] = directed[(b, a)] // 3
        else:
            raise MeshError(f"obstacle edge {(a, b)} has no adjacent triangle")
    if len(succ) != len(obst):
        raise MeshError("obstacle loop is not consistently oriented")
    start = min(succ)
    order = [start]
    while succ[order[-1]] != start:
        order.append(succ[order[-1]])
        if len(order) > len(obst):
            raise MeshError("obstacle loop traversal did not close")
    if len(order) != len(obst):
        raise MeshError("obstacle edges form more than one loop")
    order = np.array(order, dtype=np.int64)
    tris = np.array([tri_of[v] for v in order.tolist()], dtype=np.int64)
    loop = ObstacleLoop(mesh.vertices[order], vertices=order, fluid_triangles=tris)
    # the adjacent fluid triangle must lie on the normal side
    cent = mesh.vertices[t[tris]].mean(axis=1)
    side = np.einsum("ij,ij->i", cent - loop.points, loop.normals)
    if np.any(side <= 0):
        raise MeshError("obstacle normal does not point into the fluid")
    return loop


# -- retraction -------------------------------------------------------------

@dataclass(frozen=True)
class Displaced:
    """Outcome of moving mesh nodes; ``mesh`` is None when a triangle inverted."""

    mesh: TriMesh | None
    worst_quality: float

    @property
    def valid(self):
        return self.mesh is not None


def apply_displacement(mesh, displacement, scale=1.0):
    """Move every vertex by ``scale * displacement``.

    Returns a :class:`Displaced`; an inverted or flattened triangle yields
    ``mesh=None`` and ``worst_quality=inf`` instead of raising.
    """
    d = np.asarray(displacement, dtype=float).reshape(-1, 2)
    if d.shape[0] != mesh.n_vertices:
        raise ValueError("displacement needs one 2D vector per vertex")
    fixed = mesh.outer_vertices
    if len(fixed) and np.abs(d[fixed]).max() > 1e-12:
        raise ValueError("displacement must vanish on inflow, outflow and wall vertices")
    new = mesh.vertices + scale * d
    if np.any(signed_areas(new, mesh.triangles) <= 0):
        return Displaced(None, np.inf)
    out = mesh.with_vertices(new)
    return Displaced(out, element_quality(out)[1])
