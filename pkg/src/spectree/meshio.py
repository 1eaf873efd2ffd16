"""Triangle meshes, per-vertex motion, file I/O, and spatial queries.

Meshes are loaded from OBJ or PLY (ascii / binary little-endian) with
degenerate faces dropped on the way in.  Positions are float64 in memory
and float32 in files.  All container types are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError

log = logging.getLogger(__name__)

# Faces with less area than this (model units^2) are considered degenerate.
DEGENERATE_FACE_AREA = 1e-12


def _frozen_array(a, dtype, shape_tail=None):
    arr = np.ascontiguousarray(a, dtype=dtype)
    if shape_tail is not None and (arr.ndim != len(shape_tail) + 1 or arr.shape[1:] != shape_tail):
        raise DataError(f"expected array of shape (*, {shape_tail}), got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned bounding box, min <= max componentwise."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mins", _frozen_array(self.mins, np.float64))
        object.__setattr__(self, "maxs", _frozen_array(self.maxs, np.float64))
        if np.any(self.mins > self.maxs):
            raise DataError("Aabb min corner exceeds max corner")

    @classmethod
    def of_points(cls, points) -> "Aabb":
        pts = np.asarray(points, dtype=np.float64)
        if pts.size == 0:
            raise DataError("cannot take Aabb of an empty point set")
        return cls(pts.min(axis=0), pts.max(axis=0))

    @property
    def extent(self) -> np.ndarray:
        return self.maxs - self.mins

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    def contains(self, points) -> bool:
        pts = np.asarray(points, dtype=np.float64)
        return bool(np.all(pts >= self.mins) and np.all(pts <= self.maxs))


def face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    v1 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v1
    e2 = vertices[faces[:, 2]] - v1
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


@dataclass(frozen=True)
class TriMesh:
    """Static triangle mesh: vertices (N,3) float64 and faces (P,3) int32.

    `dropped_faces` records how many degenerate faces a loader discarded;
    it is metadata, not geometry.
    """

    vertices: np.ndarray
    faces: np.ndarray
    dropped_faces: int = 0

    def __post_init__(self):
        verts = _frozen_array(self.vertices, np.float64)
        faces = _frozen_array(self.faces, np.int32)
        if verts.ndim != 2 or verts.shape[1] != 3 or verts.shape[0] < 1:
            raise DataError(f"vertices must be (N>=1, 3), got {verts.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3 or faces.shape[0] < 1:
            raise DataError(f"faces must be (P>=1, 3), got {faces.shape}")
        if faces.min() < 0 or faces.max() >= len(verts):
            raise DataError("face index out of range")
        if not np.all(np.isfinite(verts)):
            raise DataError("non-finite vertex position")
        areas = face_areas(verts, faces)
        if np.any(areas <= DEGENERATE_FACE_AREA):
            raise DataError("degenerate face (area <= 1e-12); drop before constructing")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    @property
    def face_count(self) -> int:
        return self.faces.shape[0]

    @property
    def aabb(self) -> Aabb:
        return Aabb.of_points(self.vertices)


@dataclass(frozen=True)
class MotionSequence:
    """Per-vertex displacement over time, relative to the rest mesh.

    displacements has shape (T, N, 3); frame 0 is the rest frame and must
    be exactly zero.
    """

    displacements: np.ndarray
    fps: float

    def __post_init__(self):
        disp = _frozen_array(self.displacements, np.float64)
        if disp.ndim != 3 or disp.shape[2] != 3:
            raise DataError(f"displacements must be (T, N, 3), got {disp.shape}")
        if disp.shape[0] < 2:
            raise DataError("motion needs at least 2 frames")
        if not np.all(np.isfinite(disp)):
            raise DataError("non-finite displacement")
        if np.any(disp[0] != 0.0):
            raise DataError("frame 0 must be exactly zero (rest frame)")
        if not self.fps > 0:
            raise DataError("fps must be positive")
        object.__setattr__(self, "displacements", disp)

    @property
    def frame_count(self) -> int:
        return self.displacements.shape[0]

    @property
    def vertex_count(self) -> int:
        return self.displacements.shape[1]


# ---------------------------------------------------------------------------
# mesh file I/O


def _drop_degenerate(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, int]:
    if len(faces) == 0:
        return faces, 0
    keep = face_areas(verts, faces) > DEGENERATE_FACE_AREA
    return faces[keep], int((~keep).sum())


def _parse_obj(text: str) -> tuple[np.ndarray, np.ndarray]:
    verts = []
    faces = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise DataError(f"malformed OBJ vertex line: {line!r}")
            verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                head = tok.split("/")[0]
                i = int(head)
                # OBJ indices are 1-based; negative indices count from the end
                idx.append(i - 1 if i > 0 else len(verts) + i)
            if len(idx) < 3:
                raise DataError(f"face with fewer than 3 vertices: {line!r}")
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts:
        raise DataError("OBJ file contains no vertices")
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64).reshape(-1, 3)


_PLY_SCALARS = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    # header is ascii regardless of body encoding
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise DataError("not a PLY file")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]

    fmt = None
    elements = []  # (name, count, [(prop_name, dtype_or_list_spec)])
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise DataError("PLY property before any element")
            if parts[1] == "list":
                elements[-1][2].append((parts[4], ("list", _PLY_SCALARS[parts[2]], _PLY_SCALARS[parts[3]])))
            else:
                elements[-1][2].append((parts[2], _PLY_SCALARS[parts[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise DataError(f"unsupported PLY format: {fmt}")

    verts = None
    faces = []
    if fmt == "ascii":
        tokens = body.decode("ascii").split()
        pos = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = {}
                for pname, spec in props:
                    if isinstance(spec, tuple):
                        ln = int(tokens[pos]); pos += 1
                        row[pname] = [float(tokens[pos + i]) for i in range(ln)]
                        pos += ln
                    else:
                        row[pname] = float(tokens[pos]); pos += 1
                rows.append(row)
            if name == "vertex":
                verts = np.array([[r["x"], r["y"], r["z"]] for r in rows], dtype=np.float64)
            elif name == "face":
                key = "vertex_indices" if rows and "vertex_indices" in rows[0] else "vertex_index"
                for r in rows:
                    poly = [int(v) for v in r[key]]
                    for k in range(1, len(poly) - 1):
                        faces.append([poly[0], poly[k], poly[k + 1]])
    else:
        offset = 0
        for name, count, props in elements:
            has_list = any(isinstance(spec, tuple) for _, spec in props)
            if not has_list:
                dt = np.dtype([(pname, "<" + spec) for pname, spec in props])
                block = np.frombuffer(body, dtype=dt, count=count, offset=offset)
                offset += dt.itemsize * count
                if name == "vertex":
                    verts = np.stack(
                        [block["x"], block["y"], block["z"]], axis=1
                    ).astype(np.float64)
            else:
                for _ in range(count):
                    row = {}
                    for pname, spec in props:
                        if isinstance(spec, tuple):
                            _, cnt_t, val_t = spec
                            cnt_dt = np.dtype("<" + cnt_t)
                            ln = int(np.frombuffer(body, dtype=cnt_dt, count=1, offset=offset)[0])
                            offset += cnt_dt.itemsize
                            val_dt = np.dtype("<" + val_t)
                            vals = np.frombuffer(body, dtype=val_dt, count=ln, offset=offset)
                            offset += val_dt.itemsize * ln
                            row[pname] = vals
                        else:
                            dt = np.dtype("<" + spec)
                            row[pname] = np.frombuffer(body, dtype=dt, count=1, offset=offset)[0]
                            offset += dt.itemsize
                    if name == "face":
                        key = "vertex_indices" if "vertex_indices" in row else "vertex_index"
                        poly = [int(v) for v in row[key]]
                        for k in range(1, len(poly) - 1):
                            faces.append([poly[0], poly[k], poly[k + 1]])
    if verts is None or len(verts) == 0:
        raise DataError("PLY file contains no vertices")
    return verts, np.asarray(faces, dtype=np.int64).reshape(-1, 3)


def load_mesh(path) -> TriMesh:
    """Load an OBJ or PLY mesh, dropping degenerate faces.

    The number of dropped faces is logged and recorded on the returned
    mesh.  Raises DataError for unreadable files, unsupported formats, or
    meshes with zero valid faces.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read mesh file {path}: {exc}") from exc

    suffix = path.suffix.lower()
    if suffix == ".obj":
        verts, faces = _parse_obj(data.decode("utf-8", errors="replace"))
    elif suffix == ".ply":
        verts, faces = _parse_ply(data)
    else:
        raise DataError(f"unsupported mesh format: {suffix!r} (expected .obj or .ply)")

    faces, dropped = _drop_degenerate(verts, faces)
    if dropped:
        log.warning("%s: dropped %d degenerate face(s)", path.name, dropped)
    if len(faces) == 0:
        raise DataError(f"{path}: no valid faces after dropping degenerates")
    return TriMesh(verts, faces, dropped_faces=dropped)


def save_mesh(mesh: TriMesh, path) -> None:
    """Write OBJ (ascii) or PLY (binary little-endian), by extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        lines = ["# spectree mesh"]
        for v in mesh.vertices:
            lines.append("v %.9g %.9g %.9g" % (v[0], v[1], v[2]))
        for f in mesh.faces:
            lines.append("f %d %d %d" % (f[0] + 1, f[1] + 1, f[2] + 1))
        path.write_text("\n".join(lines) + "\n")
    elif suffix == ".ply":
        n, p = mesh.vertex_count, mesh.face_count
        header = (
            "ply\nformat binary_little_endian 1.0\n"
            f"element vertex {n}\n"
            "property float x\nproperty float y\nproperty float z\n"
            f"element face {p}\n"
            "property list uchar int vertex_indices\n"
            "end_header\n"
        )
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(mesh.vertices.astype("<f4").tobytes())
            face_dt = np.dtype([("count", "u1"), ("idx", "<i4", (3,))])
            block = np.empty(p, dtype=face_dt)
            block["count"] = 3
            block["idx"] = mesh.faces
            fh.write(block.tobytes())
    else:
        raise DataError(f"unsupported mesh format: {suffix!r} (expected .obj or .ply)")


# ---------------------------------------------------------------------------
# k-nearest-neighbor queries


def knn(points, query, kappa: int) -> list[tuple[int, float]]:
    """kappa nearest points to `query`, sorted by (distance, index).

    Distances are Euclidean; exact ties are broken by ascending index.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise DataError("knn on an empty point set")
    if not 1 <= kappa <= len(pts):
        raise DataError(f"kappa={kappa} out of range for {len(pts)} points")
    q = np.asarray(query, dtype=np.float64).reshape(3)
    tree = cKDTree(pts)
    d, _ = tree.query(q, k=kappa)
    dk = float(np.atleast_1d(d)[-1])
    cand = np.asarray(tree.query_ball_point(q, dk * (1 + 1e-12) + 1e-300), dtype=np.int64)
    if len(cand) < kappa:  # guard against fp radius underestimation
        cand = np.arange(len(pts))
    dist = np.sqrt(((pts[cand] - q) ** 2).sum(axis=1))
    order = np.lexsort((cand, dist))[:kappa]
    return [(int(cand[i]), float(dist[i])) for i in order]


def neighbor_table(points, kappa: int) -> tuple[np.ndarray, np.ndarray]:
    """Self-excluding kappa-NN over a point set.

    Returns (indices, distances), each (n, kappa), rows sorted by
    (distance, index).  Exact same tie-break contract as `knn`, which the
    on-lattice positions of voxel centers make load-bearing.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if not 1 <= kappa <= n - 1:
        raise DataError(f"kappa={kappa} needs 1 <= kappa < n={n}")
    tree = cKDTree(pts)
    window = min(n, kappa + 9)
    _, idx = tree.query(pts, k=window)
    idx = np.atleast_2d(idx)

    out_i = np.empty((n, kappa), dtype=np.int64)
    out_d = np.empty((n, kappa), dtype=np.float64)
    all_idx = None
    for i in range(n):
        cand = idx[i][idx[i] != i]
        d = np.sqrt(((pts[cand] - pts[i]) ** 2).sum(axis=1))
        order = np.lexsort((cand, d))
        cand, d = cand[order], d[order]
        # a tie crossing the retrieval window needs the exact row
        window_truncated = window < n and len(d) > kappa and d[kappa - 1] == d[-1]
        if len(cand) < kappa or window_truncated:
            if all_idx is None:
                all_idx = np.arange(n)
            cand = all_idx[all_idx != i]
            d = np.sqrt(((pts[cand] - pts[i]) ** 2).sum(axis=1))
            order = np.lexsort((cand, d))
            cand, d = cand[order], d[order]
        out_i[i] = cand[:kappa]
        out_d[i] = d[:kappa]
    return out_i, out_d
