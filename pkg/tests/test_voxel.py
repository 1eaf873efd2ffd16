import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectree.errors import DataError
from spectree.meshio import MotionSequence
from spectree.voxel import (SparseVoxelGrid, VoxelMotion, build_grid,
                            devoxelize, devoxelize_frames, voxelize_motion)

from conftest import sparse_points_mesh


def brute_quantize(verts, resolution):
    """Oracle: per-vertex cell via a hash of floor-quantized coordinates."""
    mins = verts.min(axis=0)
    maxs = verts.max(axis=0)
    longest = float((maxs - mins).max())
    size = longest / resolution if longest > 0 else 1.0 / resolution
    origin = mins - 0.5 * size
    cells = {}
    owner = []
    for v in verts:
        c = tuple(min(max(int(np.floor((v[a] - origin[a]) / size)), 0), resolution - 1)
                  for a in range(3))
        owner.append(cells.setdefault(c, len(cells)))
    return cells, owner


def groupby_mean(disp, owner, n):
    """Oracle: per-voxel mean via explicit python groupby."""
    T = disp.shape[0]
    out = np.zeros((T, n, 3))
    for j in range(n):
        members = [i for i, o in enumerate(owner) if o == j]
        out[:, j] = disp[:, members].mean(axis=1)
    return out


class TestBuildGrid:
    def test_single_point(self):
        grid = build_grid(np.array([[1.0, 2.0, 3.0]]), 128)
        assert grid.voxel_count == 1

    def test_opposite_corners_r2(self):
        # R=2 is outside the supported set; use 32 and two well-separated points
        grid = build_grid(np.array([[0.0, 0, 0], [10.0, 10, 10]]), 32)
        assert grid.voxel_count == 2
        assert not np.array_equal(grid.occupied[0], grid.occupied[1])

    def test_unsupported_resolution(self):
        with pytest.raises(DataError):
            build_grid(np.zeros((1, 3)), 100)

    def test_occupancy_matches_bruteforce(self, small_tree):
        _, mesh, _ = small_tree
        for R in (32, 64, 128):
            grid = build_grid(mesh, R)
            cells, owner = brute_quantize(mesh.vertices, R)
            assert grid.voxel_count == len(cells)
            # same partition: vertices sharing an oracle cell share a grid voxel
            remap = {}
            for v, j in enumerate(grid.vertex_to_voxel):
                key = owner[v]
                assert remap.setdefault(key, j) == j

    def test_every_voxel_owns_a_vertex(self, small_tree):
        _, mesh, _ = small_tree
        grid = build_grid(mesh, 128)
        assert grid.member_counts.min() >= 1
        assert grid.member_counts.sum() == mesh.vertex_count

    def test_n_bounded(self, small_tree):
        _, mesh, _ = small_tree
        grid = build_grid(mesh, 32)
        assert grid.voxel_count <= min(mesh.vertex_count, 32**3)

    def test_coordinates_in_range(self, small_tree):
        _, mesh, _ = small_tree
        grid = build_grid(mesh, 32)
        assert grid.occupied.min() >= 0
        assert grid.occupied.max() < 32


class TestVoxelize:
    def test_singleton_voxel_copies_motion(self):
        rng = np.random.default_rng(1)
        mesh = sparse_points_mesh(rng, count=12)
        grid = build_grid(mesh, 32)
        assert grid.voxel_count == mesh.vertex_count  # bijection by construction
        disp = rng.normal(size=(5, mesh.vertex_count, 3))
        disp[0] = 0
        motion = MotionSequence(disp, 24.0)
        vm = voxelize_motion(motion, grid)
        np.testing.assert_array_equal(vm.displacements, disp[:, _voxel_owner_order(grid)])

    def test_two_point_mean(self):
        verts = np.array([[0.0, 0, 0], [0.01, 0, 0], [10.0, 10, 10]])
        mesh_pts = verts
        grid = build_grid(mesh_pts, 32)
        assert grid.voxel_count == 2
        disp = np.zeros((2, 3, 3))
        disp[1, 0] = [1, 0, 0]
        disp[1, 1] = [3, 0, 0]
        motion = MotionSequence(disp, 24.0)
        vm = voxelize_motion(motion, grid)
        shared = grid.vertex_to_voxel[0]
        np.testing.assert_allclose(vm.displacements[1, shared], [2, 0, 0])

    def test_matches_groupby_oracle(self, breezy_motion):
        motion, grid = breezy_motion
        vm = voxelize_motion(motion, grid)
        oracle = groupby_mean(motion.displacements, list(grid.vertex_to_voxel),
                              grid.voxel_count)
        np.testing.assert_allclose(vm.displacements, oracle, atol=1e-12)

    def test_vertex_count_mismatch(self, breezy_motion):
        motion, grid = breezy_motion
        bad = MotionSequence(np.zeros((3, 4, 3)), 24.0)
        with pytest.raises(DataError):
            voxelize_motion(bad, grid)

    def test_commutes_with_truncation(self, breezy_motion):
        motion, grid = breezy_motion
        full = voxelize_motion(motion, grid)
        head = MotionSequence(motion.displacements[:10], motion.fps)
        np.testing.assert_array_equal(
            voxelize_motion(head, grid).displacements, full.displacements[:10]
        )


def _voxel_owner_order(grid):
    # for a bijective grid: vertex index of each voxel's single member
    order = np.empty(grid.voxel_count, dtype=int)
    for v, j in enumerate(grid.vertex_to_voxel):
        order[j] = v
    return order


class TestDevoxelize:
    def test_broadcast_single_voxel(self):
        # four coincident vertices share one cell (zero-extent AABB path)
        grid = build_grid(np.tile([[2.0, 3.0, 4.0]], (4, 1)), 32)
        assert grid.voxel_count == 1
        payload = np.array([[1.0, 2.0, 3.0]])
        out = devoxelize(payload, grid)
        assert np.array_equal(out, np.tile(payload, (4, 1)))

    def test_payload_is_owner_map(self, breezy_motion):
        _, grid = breezy_motion
        payload = np.arange(grid.voxel_count, dtype=float)
        out = devoxelize(payload, grid)
        np.testing.assert_array_equal(out, grid.vertex_to_voxel.astype(float))

    def test_payload_length_mismatch(self, breezy_motion):
        _, grid = breezy_motion
        with pytest.raises(DataError):
            devoxelize(np.zeros(grid.voxel_count + 1), grid)

    def test_roundtrip_identity_on_sparse_mesh(self):
        rng = np.random.default_rng(3)
        mesh = sparse_points_mesh(rng, count=20)
        grid = build_grid(mesh, 32)
        disp = rng.normal(size=(6, mesh.vertex_count, 3))
        disp[0] = 0
        motion = MotionSequence(disp, 24.0)
        back = devoxelize_frames(voxelize_motion(motion, grid).displacements, grid)
        np.testing.assert_allclose(back, disp, atol=1e-12)

    def test_projection_idempotent(self, breezy_motion):
        motion, grid = breezy_motion
        once = devoxelize_frames(voxelize_motion(motion, grid).displacements, grid)
        motion2 = MotionSequence(once, motion.fps)
        twice = devoxelize_frames(voxelize_motion(motion2, grid).displacements, grid)
        np.testing.assert_allclose(twice, once, atol=1e-12)

    def test_shared_voxel_shares_displacement(self, breezy_motion):
        motion, grid = breezy_motion
        out = devoxelize_frames(voxelize_motion(motion, grid).displacements, grid)
        j = int(np.argmax(grid.member_counts))
        members = grid.vertices_of(j)
        assert len(members) >= 2
        for m in members[1:]:
            np.testing.assert_array_equal(out[:, m], out[:, members[0]])


class TestInvariants:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_partition_property(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(int(rng.integers(1, 200)), 3))
        grid = build_grid(pts, 64)
        assert grid.member_counts.sum() == len(pts)
        assert len(np.unique(grid.occupied, axis=0)) == grid.voxel_count

    def test_grid_rejects_orphan_voxel(self):
        with pytest.raises(DataError):
            SparseVoxelGrid(32, np.zeros(3), 0.1,
                            occupied=np.array([[0, 0, 0], [1, 1, 1]]),
                            vertex_to_voxel=np.array([0, 0]))

    def test_voxel_motion_rest_frame(self):
        bad = np.ones((3, 2, 3))
        with pytest.raises(DataError):
            VoxelMotion(bad, 24.0)
