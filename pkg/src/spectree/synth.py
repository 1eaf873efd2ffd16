"""Procedural trees and oscillator-driven wind motion.

Trees grow as hierarchical branching structures: each node is one stem
segment rendered as a generalized cylinder, terminals carry quad leaf
cards.  Wind animates the skeleton with one damped angular oscillator
pair per node (two bending DOF perpendicular to the rest direction),
integrated with semi-implicit Euler at dt = 1/fps.  The root node is a
clamped anchor: it never rotates or translates, so the tree cannot
drift.

Torque model per node:

    tau = 1/2 * speed(t)^2 * (2 * radius * length) * w_perp

where w_perp is the wind direction's component perpendicular to the
stem.  Parent coupling is kinematic: child frames ride through their
ancestors' rotations; no force feeds back up the tree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, EngineError
from .meshio import MotionSequence, TriMesh
from .spectrum import hf_energy_ratio
from .voxel import SparseVoxelGrid, voxelize_motion

RING_SIDES = 6          # vertices per cylinder ring
TIP_TAPER = 0.6         # top-ring radius as a fraction of the base radius
ELASTIC_MODULUS = 1000.0  # sets the frequency band of default trees
BRANCH_DAMPING_RATIO = 0.15


def _perpendicular_frame(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors spanning the plane perpendicular to `direction`."""
    d = direction / np.linalg.norm(direction)
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return e1, e2


def _rotation_from_bend(e1: np.ndarray, e2: np.ndarray, theta1: float, theta2: float) -> np.ndarray:
    """Rotation matrix for the axis-angle vector theta1*e1 + theta2*e2."""
    rotvec = theta1 * e1 + theta2 * e2
    angle = np.linalg.norm(rotvec)
    if angle < 1e-15:
        return np.eye(3)
    axis = rotvec / angle
    kx, ky, kz = axis
    K = np.array([[0, -kz, ky], [kz, 0, -kx], [-ky, kx, 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


@dataclass(frozen=True)
class BranchNode:
    parent: int                 # -1 for the root
    base: np.ndarray            # (3,) world position of the hinge
    direction: np.ndarray       # (3,) unit rest direction
    length: float
    radius: float
    stiffness: float            # k_b, torque per radian
    damping: float              # c_b
    inertia: float              # I_b
    level: int = 0

    def __post_init__(self):
        for name in ("base", "direction"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if min(self.length, self.radius, self.stiffness, self.damping, self.inertia) <= 0:
            raise DataError("branch length/radius/stiffness/damping/inertia must be > 0")

    @property
    def tip(self) -> np.ndarray:
        return self.base + self.direction * self.length


@dataclass(frozen=True)
class LeafCard:
    node: int
    offset: np.ndarray  # attach point relative to the node base
    size: float

    def __post_init__(self):
        arr = np.ascontiguousarray(self.offset, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "offset", arr)


@dataclass(frozen=True)
class BranchSkeleton:
    nodes: tuple[BranchNode, ...]
    leaves: tuple[LeafCard, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "leaves", tuple(self.leaves))
        roots = [i for i, nd in enumerate(self.nodes) if nd.parent < 0]
        if roots != [0]:
            raise DataError("skeleton needs exactly one root at index 0")
        for i, nd in enumerate(self.nodes[1:], start=1):
            if not 0 <= nd.parent < i:
                raise DataError(f"node {i} breaks topological parent order")
        for leaf in self.leaves:
            if not 0 <= leaf.node < len(self.nodes):
                raise DataError("leaf card attached to unknown node")

    @property
    def node_count(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class Gust:
    amplitude: float
    frequency_hz: float
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise DataError("gust amplitude must be >= 0")
        if self.frequency_hz <= 0:
            raise DataError("gust frequency must be > 0")


@dataclass(frozen=True)
class WindField:
    direction: np.ndarray
    speed: float
    gusts: tuple[Gust, ...] = ()
    turbulence_seed: int = 0

    def __post_init__(self):
        d = np.ascontiguousarray(self.direction, dtype=np.float64)
        norm = np.linalg.norm(d)
        if norm == 0:
            raise DataError("wind direction must be nonzero")
        d = d / norm
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "gusts", tuple(self.gusts))


@dataclass(frozen=True)
class SynthParams:
    """Shape controls for the procedural grower."""

    depth: int = 3
    branches: tuple[int, int] = (2, 3)          # children per non-terminal node
    branch_angle_deg: tuple[float, float] = (25.0, 45.0)
    length_decay: float = 0.65
    radius_decay: float = 0.6
    leaves_per_terminal: int = 3
    trunk_length: float = 1.0
    trunk_radius: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.depth <= 6:
            raise DataError("depth must be in [1, 6]")
        lo, hi = self.branches
        if not 0 <= lo <= hi:
            raise DataError("branch count range must be non-empty and non-negative")
        a0, a1 = self.branch_angle_deg
        if a0 > a1:
            raise DataError("branch angle range must be non-empty")
        for name in ("length_decay", "radius_decay"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise DataError(f"{name} must be in (0, 1]")
        if self.leaves_per_terminal < 0:
            raise DataError("leaves_per_terminal must be >= 0")
        if self.trunk_length <= 0 or self.trunk_radius <= 0:
            raise DataError("trunk dimensions must be > 0")

    @classmethod
    def from_json(cls, path) -> "SynthParams":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read synth params {path}: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"unknown synth parameter(s): {sorted(unknown)}")
        for key in ("branches", "branch_angle_deg"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


def _branch_coefficients(length: float, radius: float) -> tuple[float, float, float]:
    """Cantilever-flavored stiffness/damping/inertia from segment geometry."""
    mass = np.pi * radius**2 * length
    inertia = mass * length**2 / 3.0
    stiffness = 0.75 * np.pi * ELASTIC_MODULUS * radius**4 / length
    damping = 2.0 * BRANCH_DAMPING_RATIO * np.sqrt(stiffness * inertia)
    return stiffness, damping, inertia


def grow_tree(params: SynthParams) -> tuple[BranchSkeleton, TriMesh, np.ndarray]:
    """Grow a tree: skeleton, surface mesh, and per-vertex node skinning.

    Deterministic in `params.seed`.  Every vertex belongs rigidly to
    exactly one node; leaf-card vertices belong to the node the card is
    attached to.
    """
    rng = np.random.default_rng(params.seed)
    nodes: list[BranchNode] = []
    leaves: list[LeafCard] = []

    def sprout(parent: int, base: np.ndarray, direction: np.ndarray,
               length: float, radius: float, level: int) -> None:
        k, c, inertia = _branch_coefficients(length, radius)
        idx = len(nodes)
        nodes.append(BranchNode(parent, base, direction, length, radius, k, c, inertia, level))
        tip = base + direction * length
        if level + 1 < params.depth:
            lo, hi = params.branches
            n_children = int(rng.integers(lo, hi + 1))
            for _ in range(n_children):
                angle = np.radians(rng.uniform(*params.branch_angle_deg))
                azimuth = rng.uniform(0.0, 2.0 * np.pi)
                e1, e2 = _perpendicular_frame(direction)
                tilt_axis = np.cos(azimuth) * e1 + np.sin(azimuth) * e2
                rot = _rotation_from_bend(tilt_axis, np.zeros(3), angle, 0.0)
                child_dir = rot @ direction
                child_dir /= np.linalg.norm(child_dir)
                sprout(idx, tip, child_dir,
                       length * params.length_decay, radius * params.radius_decay, level + 1)
        else:
            for _ in range(params.leaves_per_terminal):
                jitter = rng.uniform(-0.2, 0.2, size=3) * length
                leaves.append(LeafCard(idx, direction * length + jitter, 0.35 * length))

    up = np.array([0.0, 0.0, 1.0])
    sprout(-1, np.zeros(3), up, params.trunk_length, params.trunk_radius, 0)
    skeleton = BranchSkeleton(tuple(nodes), tuple(leaves))

    verts: list[np.ndarray] = []
    faces: list[list[int]] = []
    skin: list[int] = []

    for idx, node in enumerate(skeleton.nodes):
        e1, e2 = _perpendicular_frame(node.direction)
        start = len(verts)
        for ring, (center, r) in enumerate(
            ((node.base, node.radius), (node.tip, node.radius * TIP_TAPER))
        ):
            for s in range(RING_SIDES):
                phi = 2.0 * np.pi * s / RING_SIDES
                verts.append(center + r * (np.cos(phi) * e1 + np.sin(phi) * e2))
                skin.append(idx)
        for s in range(RING_SIDES):
            a = start + s
            b = start + (s + 1) % RING_SIDES
            c = start + RING_SIDES + s
            d = start + RING_SIDES + (s + 1) % RING_SIDES
            faces.append([a, b, c])
            faces.append([b, d, c])

    leaf_rng = np.random.default_rng(params.seed + 1)
    for leaf in skeleton.leaves:
        node = skeleton.nodes[leaf.node]
        attach = node.base + leaf.offset
        e1, e2 = _perpendicular_frame(node.direction)
        spin = leaf_rng.uniform(0.0, 2.0 * np.pi)
        u = np.cos(spin) * e1 + np.sin(spin) * e2
        v = np.cross(node.direction, u)
        half = 0.5 * leaf.size
        start = len(verts)
        for corner in ((-half, -half), (half, -half), (half, half), (-half, half)):
            verts.append(attach + corner[0] * u + corner[1] * v)
            skin.append(leaf.node)
        faces.append([start, start + 1, start + 2])
        faces.append([start, start + 2, start + 3])

    mesh = TriMesh(np.asarray(verts), np.asarray(faces))
    return skeleton, mesh, np.asarray(skin, dtype=np.int64)


def _gust_phases(wind: WindField, node_count: int) -> np.ndarray:
    """Per-node, per-gust phase offsets decorrelating the canopy."""
    rng = np.random.default_rng(wind.turbulence_seed)
    return rng.uniform(0.0, 2.0 * np.pi, size=(node_count, max(len(wind.gusts), 1)))


def simulate_wind(skeleton: BranchSkeleton, wind: WindField, frames: int, fps: float,
                  flutter_amplitude: float = 0.0, flutter_hz: float = 1.5,
                  wind_stop_time: float | None = None,
                  return_velocities: bool = False) -> np.ndarray:
    """Integrate per-node bend angles under wind forcing.

    Returns (T, node_count, 2) angle trajectories about each node's two
    perpendicular bend axes.  Node 0 (the root) is clamped to zero.
    Forcing drops to zero for t >= wind_stop_time (free decay);
    return_velocities additionally yields the integrator's angular
    velocities.  Raises EngineError naming the first node whose bend
    exceeds pi/2.
    """
    if frames < 2:
        raise DataError("need at least 2 frames")
    dt = 1.0 / fps
    nn = skeleton.node_count

    stiffness = np.array([nd.stiffness for nd in skeleton.nodes])
    damping = np.array([nd.damping for nd in skeleton.nodes])
    inertia = np.array([nd.inertia for nd in skeleton.nodes])
    unstable = dt * np.sqrt(stiffness / inertia) >= 2.0
    if np.any(unstable):
        bad = int(np.nonzero(unstable)[0][0])
        raise DataError(
            f"node {bad} violates the dt*sqrt(k/I) < 2 stability bound at fps={fps}"
        )

    # torque direction per DOF: DOF i tilts the tip along e_i x direction
    gain = np.empty((nn, 2))
    for i, nd in enumerate(skeleton.nodes):
        e1, e2 = _perpendicular_frame(nd.direction)
        w_perp = wind.direction - (wind.direction @ nd.direction) * nd.direction
        area = 2.0 * nd.radius * nd.length
        gain[i, 0] = 0.5 * area * (w_perp @ np.cross(e1, nd.direction))
        gain[i, 1] = 0.5 * area * (w_perp @ np.cross(e2, nd.direction))

    phases = _gust_phases(wind, nn)
    amps = np.array([g.amplitude for g in wind.gusts])
    freqs = np.array([g.frequency_hz for g in wind.gusts])
    base_phase = np.array([g.phase for g in wind.gusts])

    angles = np.zeros((frames, nn, 2))
    velocities = np.zeros((frames, nn, 2))
    theta = np.zeros((nn, 2))
    omega = np.zeros((nn, 2))
    parents = {nd.parent for nd in skeleton.nodes}
    flutter_nodes = np.array([i for i in range(1, nn) if i not in parents], dtype=np.int64)

    for t_idx in range(1, frames):
        t = (t_idx - 1) * dt  # forcing sampled at the step's start
        if wind_stop_time is not None and t >= wind_stop_time:
            tau = np.zeros((nn, 2))
        else:
            if len(amps):
                speed = wind.speed + (
                    amps * np.sin(2 * np.pi * freqs * t + base_phase + phases[:, : len(amps)])
                ).sum(axis=1)
            else:
                speed = np.full(nn, wind.speed)
            tau = (speed**2)[:, None] * gain
        omega += dt * (tau - stiffness[:, None] * theta - damping[:, None] * omega) / inertia[:, None]
        theta += dt * omega
        theta[0] = 0.0  # clamped root
        omega[0] = 0.0
        if flutter_amplitude > 0.0 and len(flutter_nodes):
            wobble = flutter_amplitude * np.sin(2 * np.pi * flutter_hz * t + phases[flutter_nodes, 0])
            angles[t_idx, flutter_nodes, 0] = wobble
        angles[t_idx] += theta
        velocities[t_idx] = omega
        worst = np.abs(angles[t_idx]).max()
        if worst > np.pi / 2:
            bad = int(np.abs(angles[t_idx]).max(axis=1).argmax())
            raise EngineError(f"unstable integration: node {bad} bent past pi/2 at frame {t_idx}")
    if return_velocities:
        return angles, velocities
    return angles


def skin_motion(skeleton: BranchSkeleton, angles: np.ndarray, mesh: TriMesh,
                skinning: np.ndarray, fps: float) -> MotionSequence:
    """Turn node angle trajectories into per-vertex displacements.

    Each node rotates its subtree about its own base, composed through
    its ancestors (forward kinematics).  Root vertices never move.
    """
    angles = np.asarray(angles, dtype=np.float64)
    if angles.ndim != 3 or angles.shape[1] != skeleton.node_count or angles.shape[2] != 2:
        raise DataError(f"angles must be (T, {skeleton.node_count}, 2), got {angles.shape}")
    skinning = np.asarray(skinning, dtype=np.int64)
    if skinning.min() < 0 or skinning.max() >= skeleton.node_count:
        raise DataError("skinning index out of range")
    if len(skinning) != mesh.vertex_count:
        raise DataError("skinning must cover every mesh vertex")

    T = angles.shape[0]
    nn = skeleton.node_count
    frames = [_perpendicular_frame(nd.direction) for nd in skeleton.nodes]
    bases = np.array([nd.base for nd in skeleton.nodes])

    disp = np.zeros((T, mesh.vertex_count, 3))
    groups = [np.nonzero(skinning == j)[0] for j in range(nn)]
    rest = mesh.vertices

    for t in range(1, T):
        rot = np.empty((nn, 3, 3))
        shift = np.empty((nn, 3))
        for j in range(nn):
            e1, e2 = frames[j]
            local = _rotation_from_bend(e1, e2, angles[t, j, 0], angles[t, j, 1])
            if skeleton.nodes[j].parent < 0:
                rot[j] = local
                shift[j] = bases[j] - local @ bases[j]
            else:
                p = skeleton.nodes[j].parent
                rot[j] = rot[p] @ local
                shift[j] = rot[p] @ (bases[j] - local @ bases[j]) + shift[p]
        for j in range(nn):
            idx = groups[j]
            if len(idx):
                disp[t, idx] = rest[idx] @ rot[j].T + shift[j] - rest[idx]
    return MotionSequence(disp, fps)


@dataclass(frozen=True)
class CurationReport:
    accepted: bool
    hf_ratio: float
    cut: int
    threshold: float

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "hf_ratio": self.hf_ratio,
            "cut": self.cut,
            "threshold": self.threshold,
        }


def curate(motion: MotionSequence, grid: SparseVoxelGrid,
           cut: int = 16, threshold: float = 0.1) -> CurationReport:
    """Accept a sample iff its high-frequency energy fraction is small."""
    ratio = hf_energy_ratio(voxelize_motion(motion, grid), cut)
    return CurationReport(ratio <= threshold, ratio, cut, threshold)
