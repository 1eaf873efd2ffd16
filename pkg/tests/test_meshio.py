import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectree.errors import DataError
from spectree.meshio import (Aabb, MotionSequence, TriMesh, knn, load_mesh,
                             neighbor_table, save_mesh)

UNIT_SQUARE_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
f 1 2 3
f 1 3 4
"""


def brute_knn(points, query, k):
    """Oracle: full O(n) scan sorted by (distance, index)."""
    pts = np.asarray(points, dtype=np.float64)
    d = np.sqrt(((pts - np.asarray(query)) ** 2).sum(axis=1))
    order = np.lexsort((np.arange(len(pts)), d))
    return [(int(i), float(d[i])) for i in order[:k]]


class TestTriMesh:
    def test_minimal_quad(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text(UNIT_SQUARE_OBJ)
        mesh = load_mesh(path)
        assert mesh.vertex_count == 4
        assert mesh.face_count == 2
        assert mesh.dropped_faces == 0

    def test_zero_area_face_dropped(self, tmp_path):
        path = tmp_path / "degen.obj"
        path.write_text(UNIT_SQUARE_OBJ + "f 1 2 2\n")
        mesh = load_mesh(path)
        assert mesh.face_count == 2
        assert mesh.dropped_faces == 1

    def test_all_faces_degenerate_is_error(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n")
        with pytest.raises(DataError):
            load_mesh(path)

    def test_unsupported_format(self, tmp_path):
        path = tmp_path / "mesh.stl"
        path.write_text("solid nope")
        with pytest.raises(DataError):
            load_mesh(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_mesh(tmp_path / "nope.obj")

    def test_face_index_out_of_range(self):
        with pytest.raises(DataError):
            TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 5]])

    def test_immutable(self):
        mesh = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        with pytest.raises(ValueError):
            mesh.vertices[0, 0] = 99.0

    def test_aabb_contains_all_vertices(self, small_tree):
        _, mesh, _ = small_tree
        box = mesh.aabb
        assert np.all(mesh.vertices >= box.mins)
        assert np.all(mesh.vertices <= box.maxs)

    def test_aabb_min_exceeding_max_rejected(self):
        with pytest.raises(DataError):
            Aabb([1, 0, 0], [0, 1, 1])


class TestRoundtrip:
    def test_ply_roundtrip_bit_exact(self, tmp_path, small_tree):
        _, mesh, _ = small_tree
        p1 = tmp_path / "a.ply"
        save_mesh(mesh, p1)
        once = load_mesh(p1)
        assert np.array_equal(once.faces, mesh.faces)
        # values pass through f32 storage exactly once
        assert np.array_equal(once.vertices, mesh.vertices.astype(np.float32).astype(np.float64))
        p2 = tmp_path / "b.ply"
        save_mesh(once, p2)
        twice = load_mesh(p2)
        assert np.array_equal(twice.vertices, once.vertices)
        assert np.array_equal(twice.faces, once.faces)

    def test_obj_roundtrip_close(self, tmp_path, small_tree):
        _, mesh, _ = small_tree
        path = tmp_path / "tree.obj"
        save_mesh(mesh, path)
        back = load_mesh(path)
        assert np.array_equal(back.faces, mesh.faces)
        scale = np.abs(mesh.vertices).max()
        assert np.abs(back.vertices - mesh.vertices).max() <= 1e-6 * scale

    def test_obj_quad_fan_triangulated(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        mesh = load_mesh(path)
        assert mesh.face_count == 2
        np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])

    def test_obj_negative_indices(self, tmp_path):
        path = tmp_path / "neg.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
        mesh = load_mesh(path)
        np.testing.assert_array_equal(mesh.faces, [[0, 1, 2]])

    def test_obj_face_with_texture_normals(self, tmp_path):
        path = tmp_path / "slash.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n")
        mesh = load_mesh(path)
        assert mesh.face_count == 1

    def test_ascii_ply_loads(self, tmp_path):
        path = tmp_path / "tri.ply"
        path.write_text(
            "ply\nformat ascii 1.0\n"
            "element vertex 3\n"
            "property float x\nproperty float y\nproperty float z\n"
            "element face 1\nproperty list uchar int vertex_indices\n"
            "end_header\n"
            "0 0 0\n1 0 0\n0 1 0\n"
            "3 0 1 2\n"
        )
        mesh = load_mesh(path)
        assert mesh.vertex_count == 3
        assert mesh.face_count == 1


class TestMotionSequence:
    def test_rest_frame_enforced(self):
        disp = np.zeros((3, 2, 3))
        disp[0, 0, 0] = 1e-9
        with pytest.raises(DataError):
            MotionSequence(disp, 24.0)

    def test_too_short(self):
        with pytest.raises(DataError):
            MotionSequence(np.zeros((1, 2, 3)), 24.0)

    def test_non_finite_rejected(self):
        disp = np.zeros((3, 2, 3))
        disp[1, 0, 0] = np.inf
        with pytest.raises(DataError):
            MotionSequence(disp, 24.0)


class TestKnn:
    def test_collinear_ordering(self):
        pts = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]
        assert [i for i, _ in knn(pts, [0, 0, 0], 2)] == [0, 1]

    def test_tie_broken_by_index(self):
        pts = np.zeros((10, 3))
        pts[3] = [1, 0, 0]
        pts[7] = [-1, 0, 0]
        got = knn(pts[[3, 7]], [0, 0, 0], 1)
        assert got[0][0] == 0  # equidistant; smaller index wins
        # and on the full set: points 3 and 7 tie at distance 1 from x=0 offset query
        got = knn(pts, [2, 0, 0], 1)
        assert got[0][0] == 3

    def test_kappa_zero_and_empty(self):
        with pytest.raises(DataError):
            knn([[0, 0, 0]], [0, 0, 0], 0)
        with pytest.raises(DataError):
            knn(np.zeros((0, 3)), [0, 0, 0], 1)

    def test_matches_bruteforce_random(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(1000, 3))
        for _ in range(20):
            q = rng.normal(size=3)
            assert knn(pts, q, 5) == brute_knn(pts, q, 5)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 8))
    def test_matches_bruteforce_on_lattices(self, seed, kappa):
        # integer lattices maximize distance ties
        rng = np.random.default_rng(seed)
        n = int(rng.integers(kappa + 1, 40))
        pts = rng.integers(0, 4, size=(n, 3)).astype(float)
        q = rng.integers(0, 4, size=3).astype(float)
        assert knn(pts, q, kappa) == brute_knn(pts, q, kappa)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    def test_neighbor_table_matches_bruteforce(self, seed, kappa):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(kappa + 1, 30))
        pts = rng.integers(0, 3, size=(n, 3)).astype(float)
        nbr, dist = neighbor_table(pts, kappa)
        for i in range(n):
            others = np.delete(np.arange(n), i)
            d = np.sqrt(((pts[others] - pts[i]) ** 2).sum(axis=1))
            order = np.lexsort((others, d))[:kappa]
            assert list(nbr[i]) == list(others[order])
            np.testing.assert_array_equal(dist[i], d[order])
