"""Face-bound Gaussian primitives and their mesh-driven deformation.

Each primitive lives at a fixed barycentric site on one triangle; its
mean, orientation, and scale are re-derived from the (possibly deformed)
face vertices every frame:

    mu   = a1*V1 + a2*V2 + a3*V3
    r1   = unit face normal
    r2   = unit in-plane direction from mu toward V1
    r3   = r1 x r2
    s    = (eps_n, beta2 * |V1 - mu|, beta3 * |(V2 - mu) . r3|)

which makes the whole parameterization exactly equivariant under rigid
motion.  Deformed faces that collapse below the degeneracy threshold
freeze their primitives at the last valid pose instead of erroring.

The per-frame path is a fused numba kernel; `pose_reference` is the
plain-numpy twin kept for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from numba import njit

from .errors import DataError
from .meshio import TriMesh

SH_C0 = 0.28209479177387814
DEGENERATE_FACE_AREA = 1e-12
DEFAULT_TANGENT_FACTOR = 0.3
NORMAL_THICKNESS_FACTOR = 1e-4  # of the rest AABB diagonal

# Stratified barycentric sites for the default five primitives per face.
BARY_SITES_5 = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [0.6, 0.2, 0.2],
        [0.2, 0.6, 0.2],
        [0.2, 0.2, 0.6],
        [0.4, 0.4, 0.2],
    ]
)


def barycentric_sites(count: int) -> np.ndarray:
    """Deterministic barycentric site table for `count` primitives.

    The first five are the pinned stratified sites; further sites come
    from a golden-ratio lattice folded into the simplex.
    """
    if count < 1:
        raise DataError("per-face primitive count must be >= 1")
    if count <= 5:
        return BARY_SITES_5[:count].copy()
    extra = count - 5
    i = np.arange(extra)
    u = (0.5 + i * 0.6180339887498949) % 1.0
    v = (0.25 + i * 0.7548776662466927) % 1.0
    flip = u + v > 1.0  # reflect into the lower triangle
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    rest = np.stack([1.0 - u - v, u, v], axis=1)
    rest = 0.9 * rest + 0.1 / 3.0  # pull off the edges
    return np.concatenate([BARY_SITES_5, rest], axis=0)


@dataclass(frozen=True)
class GaussianCloud:
    """Binding of primitives to mesh faces plus per-primitive attributes."""

    mesh: TriMesh
    face_index: np.ndarray   # (G,)
    weights: np.ndarray      # (G, 3) barycentric, rows sum to 1
    scale_coef: np.ndarray   # (G, 3): eps_n, beta2, beta3
    opacity: np.ndarray      # (G,) in (0, 1]
    color: np.ndarray        # (G, 3) in [0, 1]

    def __post_init__(self):
        fi = np.ascontiguousarray(self.face_index, dtype=np.int64)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        sc = np.ascontiguousarray(self.scale_coef, dtype=np.float64)
        op = np.ascontiguousarray(self.opacity, dtype=np.float64)
        col = np.ascontiguousarray(self.color, dtype=np.float64)
        G = len(fi)
        if fi.min(initial=0) < 0 or fi.max(initial=-1) >= self.mesh.face_count:
            raise DataError("face index out of range")
        if w.shape != (G, 3) or np.abs(w.sum(axis=1) - 1.0).max(initial=0) > 1e-9:
            raise DataError("barycentric weights must be (G, 3) with rows summing to 1")
        if G and w[:, 0].max() >= 1.0 - 1e-9:
            # mu == V1 leaves the in-plane frame direction undefined
            raise DataError("weight on the first vertex must stay below 1")
        if sc.shape != (G, 3) or np.any(sc <= 0):
            raise DataError("scale coefficients must be (G, 3) and > 0")
        if op.shape != (G,) or np.any(op <= 0) or np.any(op > 1):
            raise DataError("opacity must lie in (0, 1]")
        if col.shape != (G, 3):
            raise DataError("color must be (G, 3)")
        for name, val in (("face_index", fi), ("weights", w), ("scale_coef", sc),
                          ("opacity", op), ("color", col)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def primitive_count(self) -> int:
        return self.face_index.shape[0]

    @cached_property
    def rest_pose(self) -> "SplatPose":
        return pose(self, self.mesh.vertices)


@dataclass(frozen=True)
class SplatPose:
    """Derived per-primitive frame: means, rotations, scales."""

    mu: np.ndarray        # (G, 3)
    rotation: np.ndarray  # (G, 3, 3), columns r1 r2 r3
    scale: np.ndarray     # (G, 3)
    frozen: np.ndarray    # (G,) bool, True where the face was degenerate

    @property
    def primitive_count(self) -> int:
        return self.mu.shape[0]


def bind(mesh: TriMesh, per_face: int = 5, color=None,
         per_face_overrides: dict[int, int] | None = None) -> GaussianCloud:
    """Attach `per_face` primitives to every face at fixed stratified sites.

    `per_face_overrides` bumps individual faces (e.g. for regions that
    deform hard); no adaptive policy is applied automatically.
    """
    if mesh.face_count < 1:
        raise DataError("cannot bind to an empty mesh")
    if per_face < 1:
        raise DataError("per_face must be >= 1")
    overrides = per_face_overrides or {}
    counts = np.full(mesh.face_count, per_face, dtype=np.int64)
    for f, c in overrides.items():
        if not 0 <= f < mesh.face_count:
            raise DataError(f"override for unknown face {f}")
        if c < 1:
            raise DataError("per-face override must be >= 1")
        counts[f] = c

    face_index = np.repeat(np.arange(mesh.face_count), counts)
    if len(overrides) == 0:
        weights = np.tile(barycentric_sites(per_face), (mesh.face_count, 1))
    else:
        weights = np.concatenate([barycentric_sites(c) for c in counts], axis=0)

    G = len(face_index)
    eps_n = NORMAL_THICKNESS_FACTOR * mesh.aabb.diagonal
    scale_coef = np.tile([eps_n, DEFAULT_TANGENT_FACTOR, DEFAULT_TANGENT_FACTOR], (G, 1))
    opacity = np.ones(G)
    if color is None:
        col = np.full((G, 3), 0.5)
    else:
        col = np.broadcast_to(np.asarray(color, dtype=np.float64), (G, 3)).copy()
    return GaussianCloud(mesh, face_index, weights, scale_coef, opacity, col)


@njit(cache=True, fastmath=True)
def _pose_kernel(verts, faces, face_index, weights, scale_coef,
                 prev_mu, prev_rot, prev_scale,
                 mu, rot, scale, frozen):  # pragma: no cover - compiled
    G = face_index.shape[0]
    last = -1
    v1x = v1y = v1z = v2x = v2y = v2z = v3x = v3y = v3z = 0.0
    nx = ny = nz = 0.0
    degenerate = False
    for g in range(G):
        f = face_index[g]
        if f != last:
            last = f
            i1, i2, i3 = faces[f, 0], faces[f, 1], faces[f, 2]
            v1x, v1y, v1z = verts[i1, 0], verts[i1, 1], verts[i1, 2]
            v2x, v2y, v2z = verts[i2, 0], verts[i2, 1], verts[i2, 2]
            v3x, v3y, v3z = verts[i3, 0], verts[i3, 1], verts[i3, 2]
            e1x, e1y, e1z = v2x - v1x, v2y - v1y, v2z - v1z
            e2x, e2y, e2z = v3x - v1x, v3y - v1y, v3z - v1z
            nx = e1y * e2z - e1z * e2y
            ny = e1z * e2x - e1x * e2z
            nz = e1x * e2y - e1y * e2x
            nl = np.sqrt(nx * nx + ny * ny + nz * nz)
            degenerate = 0.5 * nl <= 1e-12
            if not degenerate:
                inl = 1.0 / nl
                nx *= inl
                ny *= inl
                nz *= inl
        if degenerate:
            frozen[g] = True
            mu[g, 0], mu[g, 1], mu[g, 2] = prev_mu[g, 0], prev_mu[g, 1], prev_mu[g, 2]
            for r in range(3):
                for c in range(3):
                    rot[g, r, c] = prev_rot[g, r, c]
            scale[g, 0], scale[g, 1], scale[g, 2] = (
                prev_scale[g, 0], prev_scale[g, 1], prev_scale[g, 2])
            continue
        frozen[g] = False
        a1, a2, a3 = weights[g, 0], weights[g, 1], weights[g, 2]
        mx = a1 * v1x + a2 * v2x + a3 * v3x
        my = a1 * v1y + a2 * v2y + a3 * v3y
        mz = a1 * v1z + a2 * v2z + a3 * v3z
        ax, ay, az = v1x - mx, v1y - my, v1z - mz
        d = ax * nx + ay * ny + az * nz
        r2x, r2y, r2z = ax - d * nx, ay - d * ny, az - d * nz
        rl = np.sqrt(r2x * r2x + r2y * r2y + r2z * r2z)
        irl = 1.0 / rl
        r2x *= irl
        r2y *= irl
        r2z *= irl
        r3x = ny * r2z - nz * r2y
        r3y = nz * r2x - nx * r2z
        r3z = nx * r2y - ny * r2x
        bx, by, bz = v2x - mx, v2y - my, v2z - mz
        mu[g, 0], mu[g, 1], mu[g, 2] = mx, my, mz
        rot[g, 0, 0], rot[g, 1, 0], rot[g, 2, 0] = nx, ny, nz
        rot[g, 0, 1], rot[g, 1, 1], rot[g, 2, 1] = r2x, r2y, r2z
        rot[g, 0, 2], rot[g, 1, 2], rot[g, 2, 2] = r3x, r3y, r3z
        scale[g, 0] = scale_coef[g, 0]
        scale[g, 1] = scale_coef[g, 1] * np.sqrt(ax * ax + ay * ay + az * az)
        scale[g, 2] = scale_coef[g, 2] * abs(bx * r3x + by * r3y + bz * r3z)


def pose(cloud: GaussianCloud, vertices: np.ndarray,
         prev: SplatPose | None = None) -> SplatPose:
    """Derive (mu, rotation, scale) from deformed vertex positions.

    Primitives on degenerate deformed faces are frozen at their pose in
    `prev` (the rest pose when `prev` is None).
    """
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    if vertices.shape != (cloud.mesh.vertex_count, 3):
        raise DataError(
            f"expected vertices {(cloud.mesh.vertex_count, 3)}, got {vertices.shape}"
        )
    G = cloud.primitive_count
    if prev is None and "rest_pose" in cloud.__dict__:
        prev = cloud.rest_pose
    if prev is None:
        # bootstrapping the rest pose itself: rest faces are never degenerate
        prev_mu = np.zeros((G, 3))
        prev_rot = np.broadcast_to(np.eye(3), (G, 3, 3)).copy()
        prev_scale = np.full((G, 3), 1e-9)
    else:
        prev_mu, prev_rot, prev_scale = prev.mu, prev.rotation, prev.scale

    mu = np.empty((G, 3))
    rot = np.empty((G, 3, 3))
    scale = np.empty((G, 3))
    frozen = np.empty(G, dtype=np.bool_)
    _pose_kernel(vertices, cloud.mesh.faces, cloud.face_index, cloud.weights,
                 cloud.scale_coef, prev_mu, prev_rot, prev_scale,
                 mu, rot, scale, frozen)
    return SplatPose(mu, rot, scale, frozen)


def pose_reference(cloud: GaussianCloud, vertices: np.ndarray) -> SplatPose:
    """Plain-numpy pose computation; degenerate faces raise here."""
    V = np.asarray(vertices, dtype=np.float64)
    tri = V[cloud.mesh.faces[cloud.face_index]]  # (G, 3, 3)
    v1, v2, v3 = tri[:, 0], tri[:, 1], tri[:, 2]
    normal = np.cross(v2 - v1, v3 - v1)
    nl = np.linalg.norm(normal, axis=1, keepdims=True)
    if np.any(0.5 * nl <= DEGENERATE_FACE_AREA):
        raise DataError("degenerate face in reference pose")
    r1 = normal / nl
    mu = np.einsum("gi,gij->gj", cloud.weights, tri)
    a = v1 - mu
    r2 = a - (np.sum(a * r1, axis=1, keepdims=True)) * r1
    r2 /= np.linalg.norm(r2, axis=1, keepdims=True)
    r3 = np.cross(r1, r2)
    scale = np.stack(
        [
            cloud.scale_coef[:, 0],
            cloud.scale_coef[:, 1] * np.linalg.norm(a, axis=1),
            cloud.scale_coef[:, 2] * np.abs(np.sum((v2 - mu) * r3, axis=1)),
        ],
        axis=1,
    )
    rot = np.stack([r1, r2, r3], axis=2)
    return SplatPose(mu, rot, scale, np.zeros(len(mu), dtype=np.bool_))


def quaternion_from_rotation(R: np.ndarray) -> np.ndarray:
    """Unit quaternions (w, x, y, z) with w >= 0 from rotation matrices."""
    R = np.asarray(R, dtype=np.float64)
    single = R.ndim == 2
    if single:
        R = R[None]
    m00, m11, m22 = R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]
    trace = m00 + m11 + m22

    case0 = trace > 0
    s = np.sqrt(np.maximum(trace + 1.0, 0.0)) * 2
    with np.errstate(divide="ignore", invalid="ignore"):
        q0 = np.stack([
            0.25 * s,
            (R[:, 2, 1] - R[:, 1, 2]) / s,
            (R[:, 0, 2] - R[:, 2, 0]) / s,
            (R[:, 1, 0] - R[:, 0, 1]) / s,
        ], axis=1)
        sx = np.sqrt(np.maximum(1.0 + m00 - m11 - m22, 0.0)) * 2
        qx = np.stack([
            (R[:, 2, 1] - R[:, 1, 2]) / sx,
            0.25 * sx,
            (R[:, 0, 1] + R[:, 1, 0]) / sx,
            (R[:, 0, 2] + R[:, 2, 0]) / sx,
        ], axis=1)
        sy = np.sqrt(np.maximum(1.0 - m00 + m11 - m22, 0.0)) * 2
        qy = np.stack([
            (R[:, 0, 2] - R[:, 2, 0]) / sy,
            (R[:, 0, 1] + R[:, 1, 0]) / sy,
            0.25 * sy,
            (R[:, 1, 2] + R[:, 2, 1]) / sy,
        ], axis=1)
        sz = np.sqrt(np.maximum(1.0 - m00 - m11 + m22, 0.0)) * 2
        qz = np.stack([
            (R[:, 1, 0] - R[:, 0, 1]) / sz,
            (R[:, 0, 2] + R[:, 2, 0]) / sz,
            (R[:, 1, 2] + R[:, 2, 1]) / sz,
            0.25 * sz,
        ], axis=1)

    branch = np.where(
        case0, 0,
        np.where((m00 >= m11) & (m00 >= m22), 1, np.where(m11 >= m22, 2, 3)),
    )
    q = np.choose(branch[:, None], [q0, qx, qy, qz])
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q[q[:, 0] < 0] *= -1.0
    return q[0] if single else q


def deform_deltas(cloud: GaussianCloud, rest: SplatPose, deformed: SplatPose):
    """Per-primitive (dx, dq, ds) between two poses of the same cloud.

    dq is the unit quaternion of R_deformed . R_rest^T with w >= 0.
    """
    if rest.primitive_count != deformed.primitive_count != cloud.primitive_count:
        raise DataError("poses do not match the cloud")
    dx = deformed.mu - rest.mu
    rel = np.einsum("gij,gkj->gik", deformed.rotation, rest.rotation)
    dq = quaternion_from_rotation(rel)
    ds = deformed.scale - rest.scale
    return dx, dq, ds


# ---------------------------------------------------------------------------
# splat PLY interchange (the de-facto 3DGS layout, binary little-endian)

_SPLAT_FIELDS = (
    "x", "y", "z", "nx", "ny", "nz",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)


def export_splats(cloud: GaussianCloud, splat_pose: SplatPose, path) -> None:
    """Write the posed cloud as a standard splat PLY.

    Scales are stored as logs, opacity through the inverse sigmoid
    (clamped to 0.9999 first), color as 0-order SH.
    """
    G = cloud.primitive_count
    if splat_pose.primitive_count != G:
        raise DataError("pose does not match cloud")
    quat = quaternion_from_rotation(splat_pose.rotation)
    op = np.clip(cloud.opacity, 1e-6, 0.9999)
    logit = np.log(op / (1.0 - op))
    f_dc = (cloud.color - 0.5) / SH_C0

    block = np.empty((G, len(_SPLAT_FIELDS)), dtype="<f4")
    block[:, 0:3] = splat_pose.mu
    block[:, 3:6] = 0.0
    block[:, 6:9] = f_dc
    block[:, 9] = logit
    block[:, 10:13] = np.log(splat_pose.scale)
    block[:, 13:17] = quat

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {G}"]
    header += [f"property float {name}" for name in _SPLAT_FIELDS]
    header += ["end_header", ""]
    with open(Path(path), "wb") as fh:
        fh.write("\n".join(header).encode("ascii"))
        fh.write(block.tobytes())


def import_splats(path):
    """Read back a splat PLY into a dict of float64 arrays keyed by field."""
    data = Path(path).read_bytes()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise DataError(f"{path}: not a PLY file")
    count = None
    names = []
    for line in data[:end].decode("ascii").splitlines():
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            count = int(parts[2])
        elif parts and parts[0] == "property":
            if parts[1] != "float":
                raise DataError("splat PLY must be all-float32")
            names.append(parts[2])
    if count is None:
        raise DataError(f"{path}: no vertex element")
    body = np.frombuffer(data, dtype="<f4", count=count * len(names),
                         offset=end + len(b"end_header\n"))
    body = body.reshape(count, len(names)).astype(np.float64)
    return {name: body[:, i].copy() for i, name in enumerate(names)}
