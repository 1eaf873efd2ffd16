"""Pipeline orchestration: offline animation and the interactive loop.

Offline: voxelize dense motion, compress to a spectrum, reconstruct,
bind Gaussians, pose them per frame, and report reconstruction quality
plus stage timings.

Interactive: the spectrum becomes a modal bank; a single-owner session
drains force events, steps the oscillators, superposes, devoxelizes,
and (optionally) poses splats, publishing immutable frames.  Frame
content is a pure function of (config, event stream); wall-clock time
never enters the simulation, so recorded sessions replay bit-identically.
Timing fields are measurements and are excluded from that contract.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from .meshio import MotionSequence, TriMesh
from .modal import (DEFAULT_DAMPING_RATIO, ForceEvent, ModalState,
                    build_bank, project_force, step, superpose)
from .spectrum import (DEFAULT_BINS, DEFAULT_FPS, SparseVoxelSpectrum,
                       fft_compress, hf_energy_ratio, lss_metric,
                       reconstruct_motion)
from .splat import GaussianCloud, SplatPose, bind, pose, quaternion_from_rotation
from .voxel import SparseVoxelGrid, build_grid, devoxelize, voxelize_motion


@dataclass(frozen=True)
class SessionConfig:
    dt: float = 1.0 / 60.0
    damping_ratio: float = DEFAULT_DAMPING_RATIO
    force_scale: float = 1.0
    integrator: str = "semi_implicit"
    resolution: int = 128
    bins: int = DEFAULT_BINS
    fps: float = DEFAULT_FPS
    per_face: int = 5
    payload: str = "vertices"  # or "splats"

    def __post_init__(self):
        if self.dt <= 0:
            raise DataError("dt must be > 0")
        if self.payload not in ("vertices", "splats"):
            raise DataError("payload must be 'vertices' or 'splats'")


@dataclass(frozen=True)
class FrameTimings:
    """Per-frame stage costs in milliseconds."""

    modal_ms: float = 0.0   # step + superpose
    devox_ms: float = 0.0
    pose_ms: float = 0.0

    @property
    def total_ms(self) -> float:
        return self.modal_ms + self.devox_ms + self.pose_ms

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.modal_ms, self.devox_ms, self.pose_ms)


@dataclass(frozen=True)
class Frame:
    """One published simulation frame; payload arrays are read-only."""

    index: int
    time: float
    vertices: np.ndarray | None
    splats: SplatPose | None
    timings: FrameTimings

    def payload_bytes(self) -> bytes:
        """Deterministic payload encoding (excludes timings)."""
        if self.vertices is not None:
            return self.vertices.astype("<f8").tobytes()
        sp = self.splats
        quat = quaternion_from_rotation(sp.rotation)
        return np.concatenate([sp.mu, quat, sp.scale], axis=1).astype("<f8").tobytes()


def frame_stream_digest(frames) -> str:
    """SHA-256 over (index, sim time, payload) of every frame."""
    h = hashlib.sha256()
    for fr in frames:
        h.update(np.int64(fr.index).tobytes())
        h.update(np.float64(fr.time).tobytes())
        h.update(fr.payload_bytes())
    return h.hexdigest()


@dataclass
class AnimationReport:
    reconstruction_rel_l2: float
    hf_ratio: float
    lss: float
    stage_ms: dict

    def to_dict(self) -> dict:
        return {
            "reconstruction_rel_l2": self.reconstruction_rel_l2,
            "hf_ratio": self.hf_ratio,
            "lss": self.lss,
            "stage_ms": self.stage_ms,
        }


@dataclass
class AnimationResult:
    grid: SparseVoxelGrid
    spectrum: SparseVoxelSpectrum
    reconstructed: MotionSequence
    cloud: GaussianCloud
    poses: list[SplatPose]
    report: AnimationReport


def run_animation(mesh: TriMesh, motion: MotionSequence,
                  config: SessionConfig = SessionConfig()) -> AnimationResult:
    """Offline pipeline: motion -> spectrum -> reconstruction -> splat poses."""
    if motion.vertex_count != mesh.vertex_count:
        raise DataError("motion does not cover the mesh vertices")
    stage_ms: dict[str, float] = {}

    t0 = time.perf_counter()
    grid = build_grid(mesh, config.resolution)
    voxel_motion = voxelize_motion(motion, grid)
    stage_ms["voxelize"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    spectrum = fft_compress(voxel_motion, config.bins, grid)
    stage_ms["compress"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    recon = reconstruct_motion(spectrum)
    stage_ms["reconstruct"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    cloud = bind(mesh, config.per_face)
    rest = cloud.rest_pose
    poses = []
    prev = rest
    for t in range(recon.frame_count):
        prev = pose(cloud, mesh.vertices + recon.displacements[t], prev=prev)
        poses.append(prev)
    stage_ms["pose"] = (time.perf_counter() - t0) * 1e3

    src = motion.displacements
    denom = float(np.linalg.norm(src))
    err = float(np.linalg.norm(recon.displacements - src))
    rel = err / denom if denom > 0 else 0.0
    report = AnimationReport(
        reconstruction_rel_l2=rel,
        hf_ratio=hf_energy_ratio(voxel_motion, config.bins),
        lss=lss_metric(spectrum),
        stage_ms=stage_ms,
    )
    return AnimationResult(grid, spectrum, recon, cloud, poses, report)


class InteractiveSession:
    """Single-owner modal simulation over a spectrum.

    Not thread-safe by design: exactly one caller owns `advance`.
    Concurrent access is the gateway's job (event queue in, latest-value
    frame cell out).
    """

    def __init__(self, mesh: TriMesh, spectrum: SparseVoxelSpectrum,
                 config: SessionConfig = SessionConfig()):
        if spectrum.grid.vertex_count != mesh.vertex_count:
            raise DataError("spectrum grid does not match the mesh")
        self.mesh = mesh
        self.spectrum = spectrum
        self.config = config
        self.grid = spectrum.grid
        self.bank = build_bank(spectrum, config.damping_ratio)
        if config.dt * self.bank.omegas[-1] >= 2.0:
            raise DataError(
                f"dt={config.dt} violates the stability guard for this bank "
                f"(omega_max={self.bank.omegas[-1]:.3f})"
            )
        self.state = ModalState.zero(self.bank)
        self.frame_index = 0
        self.active_events: list[ForceEvent] = []
        self.cloud = bind(mesh, config.per_face) if config.payload == "splats" else None
        self._prev_pose = self.cloud.rest_pose if self.cloud is not None else None

    def submit(self, event: ForceEvent) -> ForceEvent:
        """Schedule a force event; events in the past snap to now."""
        ev = event if event.start >= self.state.time else replace(event, start=self.state.time)
        if self.config.force_scale != 1.0:
            ev = replace(ev, force=ev.force * self.config.force_scale)
        self.active_events.append(ev)
        return ev

    def advance(self) -> Frame:
        """One fixed-dt step; returns the published frame."""
        cfg = self.config
        t0 = time.perf_counter()
        forces = project_force(self.bank, self.active_events, self.state.time)
        self.state = step(self.bank, self.state, forces, cfg.dt, cfg.integrator)
        voxel_disp = superpose(self.bank, self.state)
        t1 = time.perf_counter()
        vertex_disp = devoxelize(voxel_disp, self.grid)
        vertices = self.mesh.vertices + vertex_disp
        t2 = time.perf_counter()

        splats = None
        if self.cloud is not None:
            splats = pose(self.cloud, vertices, prev=self._prev_pose)
            self._prev_pose = splats
        t3 = time.perf_counter()

        # retire events that can never fire again
        now = self.state.time
        self.active_events = [ev for ev in self.active_events if ev.start + ev.duration > now]

        self.frame_index += 1
        vertices.setflags(write=False)
        timings = FrameTimings(
            modal_ms=(t1 - t0) * 1e3,
            devox_ms=(t2 - t1) * 1e3,
            pose_ms=(t3 - t2) * 1e3,
        )
        return Frame(self.frame_index, now,
                     vertices if cfg.payload == "vertices" else None,
                     splats, timings)


def save_event_log(events, path) -> None:
    """JSON-lines force log: {"t", "type", "voxel", "force", "duration"}."""
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps({
                "t": ev.start,
                "type": "force",
                "voxel": ev.voxel,
                "force": [float(x) for x in ev.force],
                "duration": ev.duration,
            }) + "\n")


def load_event_log(path) -> list[ForceEvent]:
    events = []
    for lineno, line in enumerate(open(path), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: bad JSON: {exc}") from exc
        if rec.get("type") != "force":
            raise DataError(f"{path}:{lineno}: unknown event type {rec.get('type')!r}")
        events.append(ForceEvent(voxel=int(rec["voxel"]),
                                 force=np.asarray(rec["force"], dtype=np.float64),
                                 start=float(rec["t"]),
                                 duration=float(rec["duration"])))
    return events


def run_interactive(mesh: TriMesh, spectrum: SparseVoxelSpectrum,
                    config: SessionConfig, events, frame_count: int):
    """Deterministic offline drive of an interactive session.

    `events` is an iterable of ForceEvent; each is injected when the
    simulation clock first reaches its start time.  Yields frames.
    """
    session = InteractiveSession(mesh, spectrum, config)
    pending = sorted(events, key=lambda e: e.start)
    cursor = 0
    for _ in range(frame_count):
        while cursor < len(pending) and pending[cursor].start <= session.state.time:
            session.submit(pending[cursor])
            cursor += 1
        yield session.advance()
