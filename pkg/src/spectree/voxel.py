"""Sparse voxel grid over mesh vertices; voxelize / devoxelize motion.

The grid partitions vertices into cubic cells.  Voxelization averages
member-vertex displacements; devoxelization copies each cell's payload
back to all vertices it owns (piecewise-constant, so devoxelize after
voxelize is a projection).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DataError
from .meshio import Aabb, MotionSequence, TriMesh

SUPPORTED_RESOLUTIONS = (32, 64, 128, 256, 512)


@dataclass(frozen=True)
class SparseVoxelGrid:
    """Occupied cells of an R^3 lattice plus the vertex <-> cell maps."""

    resolution: int
    origin: np.ndarray            # (3,) world position of lattice corner
    voxel_size: float             # cubic edge length, model units
    occupied: np.ndarray          # (n, 3) integer cell coordinates, unique
    vertex_to_voxel: np.ndarray   # (N,) indices into occupied

    def __post_init__(self):
        origin = np.ascontiguousarray(self.origin, dtype=np.float64)
        occ = np.ascontiguousarray(self.occupied, dtype=np.int64)
        v2v = np.ascontiguousarray(self.vertex_to_voxel, dtype=np.int64)
        R = self.resolution
        if occ.ndim != 2 or occ.shape[1] != 3:
            raise DataError("occupied must be (n, 3)")
        if occ.min(initial=0) < 0 or occ.max(initial=0) >= R:
            raise DataError("occupied coordinate outside [0, R)")
        if v2v.min(initial=0) < 0 or v2v.max(initial=-1) >= len(occ):
            raise DataError("vertex_to_voxel index out of range")
        counts = np.bincount(v2v, minlength=len(occ))
        if len(occ) and counts.min() < 1:
            raise DataError("occupied voxel owning no vertex")
        for name, val in (("origin", origin), ("occupied", occ), ("vertex_to_voxel", v2v)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def voxel_count(self) -> int:
        return self.occupied.shape[0]

    @property
    def vertex_count(self) -> int:
        return self.vertex_to_voxel.shape[0]

    @cached_property
    def member_counts(self) -> np.ndarray:
        counts = np.bincount(self.vertex_to_voxel, minlength=self.voxel_count)
        counts.setflags(write=False)
        return counts

    @cached_property
    def _mean_matrix(self) -> sp.csr_matrix:
        # (n, N) row-stochastic matrix: row j averages over voxel j's vertices
        n, N = self.voxel_count, self.vertex_count
        weights = 1.0 / self.member_counts[self.vertex_to_voxel]
        return sp.csr_matrix((weights, (self.vertex_to_voxel, np.arange(N))), shape=(n, N))

    def voxel_centers(self) -> np.ndarray:
        return self.origin + (self.occupied + 0.5) * self.voxel_size

    def vertices_of(self, voxel: int) -> np.ndarray:
        return np.nonzero(self.vertex_to_voxel == voxel)[0]


@dataclass(frozen=True)
class VoxelMotion:
    """Per-voxel displacement over time, (T, n, 3); frame 0 is zero."""

    displacements: np.ndarray
    fps: float

    def __post_init__(self):
        disp = np.ascontiguousarray(self.displacements, dtype=np.float64)
        if disp.ndim != 3 or disp.shape[2] != 3:
            raise DataError(f"voxel displacements must be (T, n, 3), got {disp.shape}")
        if disp.shape[0] < 2:
            raise DataError("voxel motion needs at least 2 frames")
        if not np.all(np.isfinite(disp)):
            raise DataError("non-finite voxel displacement")
        if np.any(disp[0] != 0.0):
            raise DataError("frame 0 must be exactly zero")
        disp.setflags(write=False)
        object.__setattr__(self, "displacements", disp)

    @property
    def frame_count(self) -> int:
        return self.displacements.shape[0]

    @property
    def voxel_count(self) -> int:
        return self.displacements.shape[1]


def build_grid(mesh, resolution: int = 128) -> SparseVoxelGrid:
    """Quantize mesh vertices onto an R^3 lattice of cubic cells.

    Cells are sized by the longest AABB edge divided by R; the lattice is
    the mesh AABB expanded by half a cell on each side.  `mesh` may be a
    TriMesh or a raw (N, 3) position array.
    """
    if resolution not in SUPPORTED_RESOLUTIONS:
        raise DataError(f"resolution {resolution} not in {SUPPORTED_RESOLUTIONS}")
    verts = mesh.vertices if isinstance(mesh, TriMesh) else np.asarray(mesh, dtype=np.float64)
    verts = verts.reshape(-1, 3)
    if len(verts) == 0:
        raise DataError("cannot build a grid over an empty mesh")

    aabb = Aabb.of_points(verts)
    longest = float(aabb.extent.max())
    # a point cloud with zero extent still needs a positive cell size
    voxel_size = longest / resolution if longest > 0 else 1.0 / resolution
    origin = aabb.mins - 0.5 * voxel_size

    coords = np.floor((verts - origin) / voxel_size).astype(np.int64)
    np.clip(coords, 0, resolution - 1, out=coords)

    linear = (coords[:, 0] * resolution + coords[:, 1]) * resolution + coords[:, 2]
    unique_linear, vertex_to_voxel = np.unique(linear, return_inverse=True)
    occupied = np.stack(
        [
            unique_linear // (resolution * resolution),
            (unique_linear // resolution) % resolution,
            unique_linear % resolution,
        ],
        axis=1,
    )
    return SparseVoxelGrid(resolution, origin, voxel_size, occupied, vertex_to_voxel)


def voxelize_motion(motion: MotionSequence, grid: SparseVoxelGrid) -> VoxelMotion:
    """Average per-vertex displacements into per-voxel displacements."""
    if motion.vertex_count != grid.vertex_count:
        raise DataError(
            f"motion has {motion.vertex_count} vertices, grid expects {grid.vertex_count}"
        )
    T, N, _ = motion.displacements.shape
    flat = motion.displacements.transpose(1, 0, 2).reshape(N, T * 3)
    voxelized = grid._mean_matrix @ flat
    out = voxelized.reshape(grid.voxel_count, T, 3).transpose(1, 0, 2)
    out[0] = 0.0  # exact rest frame: the mean of zeros picks up no fp dust, but be explicit
    return VoxelMotion(out, motion.fps)


def devoxelize(values: np.ndarray, grid: SparseVoxelGrid) -> np.ndarray:
    """Copy each voxel's payload to every vertex it owns.

    `values` is (n, ...) with the voxel axis leading; vertices receive
    their owner's payload verbatim (no interpolation).
    """
    values = np.asarray(values)
    if values.shape[0] != grid.voxel_count:
        raise DataError(
            f"payload has leading size {values.shape[0]}, grid has {grid.voxel_count} voxels"
        )
    return values[grid.vertex_to_voxel]


def devoxelize_frames(frames: np.ndarray, grid: SparseVoxelGrid) -> np.ndarray:
    """Devoxelize a time-stacked payload of shape (T, n, ...)."""
    frames = np.asarray(frames)
    if frames.shape[1] != grid.voxel_count:
        raise DataError(
            f"payload has {frames.shape[1]} voxels per frame, grid has {grid.voxel_count}"
        )
    return frames[:, grid.vertex_to_voxel]
