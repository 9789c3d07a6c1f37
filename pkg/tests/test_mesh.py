import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from stokes_shape.mesh import (BoundaryMarker, MeshError, MshParseError, ObstacleLoop, TriMesh,
                               annulus_mesh, apply_displacement, channel_mesh, element_quality,
                               load_gmsh, obstacle_loop, read_vtu, rectangle_mesh, regular_polygon,
                               triangle_quality, write_msh22, write_vtu)

finite = st.floats(-10, 10, allow_nan=False)


def _square():
    v = [[0, 0], [1, 0], [1, 1], [0, 1]]
    t = [[0, 1, 2], [0, 2, 3]]
    e = [[0, 1], [1, 2], [2, 3], [3, 0]]
    return v, t, e


class TestTriMesh:
    def test_rectangle_areas_sum_to_box(self):
        m = rectangle_mesh(-1.0, 2.0, 0.0, 0.5, 6, 3, perturb=0.2, seed=3)
        assert np.all(m.areas > 0)
        assert m.areas.sum() == pytest.approx(1.5, rel=1e-14)

    def test_build_reorients_clockwise_triangles(self):
        v, t, e = _square()
        m = TriMesh.build(v, [[0, 2, 1], [0, 3, 2]], e, ["wall"] * 4)
        assert np.all(m.areas > 0)

    def test_rejects_inverted_triangle(self):
        v, t, e = _square()
        with pytest.raises(MeshError, match="nonpositive area"):
            TriMesh(v, [[0, 2, 1], [0, 2, 3]], e, [3] * 4)

    def test_rejects_unmarked_boundary_edge(self):
        v, t, e = _square()
        with pytest.raises(MeshError, match="unmarked boundary edge"):
            TriMesh(v, t, e[:3], [3] * 3)

    def test_rejects_marked_interior_edge(self):
        v, t, e = _square()
        with pytest.raises(MeshError, match="not a boundary edge"):
            TriMesh(v, t, e + [[0, 2]], [3] * 5)

    def test_rejects_unknown_marker(self):
        v, t, e = _square()
        with pytest.raises(MeshError, match="unknown boundary marker"):
            TriMesh(v, t, e, [3, 3, 3, 9])

    def test_vertices_are_read_only(self):
        m = rectangle_mesh(0, 1, 0, 1, 2, 2)
        with pytest.raises(ValueError):
            m.vertices[0, 0] = 5.0

    def test_marker_parse(self):
        assert BoundaryMarker.parse(" Obstacle ") is BoundaryMarker.OBSTACLE
        with pytest.raises(ValueError):
            BoundaryMarker.parse("lid")


class TestQuality:
    def test_equilateral_is_one(self):
        q = triangle_quality([0, 0], [2, 0], [1, np.sqrt(3)])
        assert q[0] == pytest.approx(1.0, abs=1e-14)

    def test_degenerate_is_infinite(self):
        assert np.isinf(triangle_quality([0, 0], [1, 0], [2, 0])[0])

    @given(st.lists(finite, min_size=6, max_size=6))
    def test_matches_condition_number(self, c):
        p = np.array(c).reshape(3, 2)
        phys = np.column_stack([p[1] - p[0], p[2] - p[0]])
        if abs(np.linalg.det(phys)) < 1e-3:
            return
        ref = np.array([[1.0, 0.5], [0.0, np.sqrt(3) / 2]])
        expected = np.linalg.cond(phys @ np.linalg.inv(ref))
        assert triangle_quality(*p)[0] == pytest.approx(expected, rel=1e-8)

    @given(st.lists(finite, min_size=6, max_size=6), st.floats(0, 2 * np.pi), st.floats(0.1, 10),
           st.tuples(finite, finite))
    def test_similarity_invariant(self, c, angle, scale, shift):
        p = np.array(c).reshape(3, 2)
        d = np.column_stack([p[1] - p[0], p[2] - p[0]])
        if abs(np.linalg.det(d)) < 1e-2:
            return
        R = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        q = scale * p @ R.T + np.array(shift)
        a, b = triangle_quality(*p)[0], triangle_quality(*q)[0]
        assert a >= 1.0
        assert b == pytest.approx(a, rel=1e-6)


class TestObstacleLoop:
    def test_channel_loop_normals_point_into_fluid(self, coarse_mesh):
        loop = obstacle_loop(coarse_mesh)
        assert len(loop) == 48
        radial = loop.points / np.linalg.norm(loop.points, axis=1)[:, None]
        assert np.all(np.einsum("ij,ij->i", loop.normals, radial) > 0.99)
        assert np.all(np.einsum("ij,ij->i", loop.vertex_normals, radial) > 0.999)

    @given(st.integers(3, 64))
    def test_vertex_normals_bisect_regular_polygon(self, n):
        loop = ObstacleLoop.from_polygon(regular_polygon(n, 2.0))
        radial = loop.points / 2.0
        np.testing.assert_allclose(loop.vertex_normals, radial, atol=1e-12)
        assert loop.perimeter == pytest.approx(2 * n * 2.0 * np.sin(np.pi / n), rel=1e-12)

    def test_from_polygon_either_orientation(self):
        p = regular_polygon(7)
        a, b = ObstacleLoop.from_polygon(p), ObstacleLoop.from_polygon(p[::-1])
        np.testing.assert_array_equal(a.points, b.points)

    def test_needs_three_points(self):
        with pytest.raises(MeshError):
            ObstacleLoop(np.zeros((2, 2)))


class TestDisplacement:
    def test_inversion_is_reported_not_raised(self, coarse_mesh):
        loop = obstacle_loop(coarse_mesh)
        d = np.zeros((coarse_mesh.n_vertices, 2))
        d[loop.vertices] = -loop.vertex_normals
        moved = apply_displacement(coarse_mesh, d, 0.5)
        assert not moved.valid and np.isinf(moved.worst_quality)

    def test_small_move_keeps_mesh(self, coarse_mesh):
        loop = obstacle_loop(coarse_mesh)
        d = np.zeros((coarse_mesh.n_vertices, 2))
        d[loop.vertices] = loop.vertex_normals
        moved = apply_displacement(coarse_mesh, d, 1e-3)
        assert moved.valid
        assert moved.worst_quality == element_quality(moved.mesh)[1]

    def test_outer_boundary_is_fixed(self, coarse_mesh):
        d = np.zeros((coarse_mesh.n_vertices, 2))
        d[coarse_mesh.outer_vertices[0]] = 1.0
        with pytest.raises(ValueError, match="vanish"):
            apply_displacement(coarse_mesh, d)


class TestGeneration:
    def test_symmetric_channel_mirrors_exactly(self, coarse_mesh):
        v = coarse_mesh.vertices
        dist, _ = cKDTree(v).query(v * [1.0, -1.0])
        assert dist.max() == 0.0
        markers = {BoundaryMarker(int(m)) for m in np.unique(coarse_mesh.boundary_markers)}
        assert markers == set(BoundaryMarker)

    def test_channel_area(self, coarse_mesh):
        loop = obstacle_loop(coarse_mesh)
        x, y = loop.points.T
        hole = 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        assert coarse_mesh.areas.sum() == pytest.approx(9.0 * 4.0 - hole, rel=1e-12)

    def test_odd_count_cannot_be_symmetric(self):
        with pytest.raises(MeshError):
            channel_mesh(n_obstacle=47, symmetric=True)

    def test_obstacle_must_fit(self):
        with pytest.raises(MeshError, match="does not fit"):
            channel_mesh(radius=3.0)

    def test_generation_is_deterministic(self):
        a = channel_mesh(n_obstacle=24, h_max=1.0, grading=0.5)
        b = channel_mesh(n_obstacle=24, h_max=1.0, grading=0.5)
        np.testing.assert_array_equal(a.vertices, b.vertices)
        np.testing.assert_array_equal(a.triangles, b.triangles)

    def test_annulus(self):
        m = annulus_mesh(1.0, 2.0, 64, 8)
        exact = np.pi * 64 / (2 * np.pi) * np.sin(2 * np.pi / 64) * (4.0 - 1.0)
        assert m.areas.sum() == pytest.approx(exact, rel=1e-12)


class TestIo:
    def test_msh22_round_trip(self, coarse_mesh, tmp_path):
        path = tmp_path / "m.msh"
        write_msh22(coarse_mesh, path)
        back = load_gmsh(path)
        np.testing.assert_array_equal(back.vertices, coarse_mesh.vertices)
        np.testing.assert_array_equal(back.triangles, coarse_mesh.triangles)
        np.testing.assert_array_equal(back.boundary_markers, coarse_mesh.boundary_markers)

    def test_msh41_with_named_groups(self, tmp_path):
        text = """$MeshFormat
4.1 0 8
$EndMeshFormat
$PhysicalNames
2
1 7 "walls"
2 8 "fluid"
$EndPhysicalNames
$Entities
0 1 1 0
1 0 0 0 1 1 0 1 7 0
1 0 0 0 1 1 0 1 8 0
$EndEntities
$Nodes
1 4 1 4
2 1 0 4
1
2
3
4
0 0 0
1 0 0
1 1 0
0 1 0
$EndNodes
$Elements
2 6 1 6
1 1 1 4
1 1 2
2 2 3
3 3 4
4 4 1
2 1 2 2
5 1 2 3
6 1 3 4
$EndElements
"""
        path = tmp_path / "sq.msh"
        path.write_text(text)
        m = load_gmsh(path, {"walls": "wall"})
        assert m.n_triangles == 2 and len(m.boundary_edges) == 4
        assert m.areas.sum() == pytest.approx(1.0)

    def test_unclosed_section(self, tmp_path):
        path = tmp_path / "bad.msh"
        path.write_text("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n1\n1 0 0 0\n")
        with pytest.raises(MshParseError, match="never closed"):
            load_gmsh(path)

    def test_unknown_group_name(self, coarse_mesh, tmp_path):
        path = tmp_path / "m.msh"
        write_msh22(coarse_mesh, path)
        with pytest.raises(MshParseError, match="unknown physical group"):
            load_gmsh(path, {"lid": "wall"})

    def test_vtu_round_trip_and_determinism(self, coarse_mesh, tmp_path, rng):
        u = rng.standard_normal((coarse_mesh.n_vertices, 2))
        q = element_quality(coarse_mesh)[0]
        a, b = tmp_path / "a.vtu", tmp_path / "b.vtu"
        for p in (a, b):
            write_vtu(coarse_mesh, p, {"velocity": u}, {"quality": q})
        assert a.read_bytes() == b.read_bytes()
        back = read_vtu(a)
        np.testing.assert_array_equal(back.vertices, coarse_mesh.vertices)
        np.testing.assert_array_equal(back.point_data["velocity"][:, :2], u)
        np.testing.assert_array_equal(back.cell_data["quality"], q)

    def test_vtu_rejects_wrong_length(self, coarse_mesh, tmp_path):
        with pytest.raises(ValueError, match="point field"):
            write_vtu(coarse_mesh, tmp_path / "x.vtu", {"p": np.zeros(3)})
