"""Network bridge: frames out to viewers, force events in.

One simulation, any number of viewer connections.  Control traffic is
JSON text over the websocket; frames are binary with a fixed 16-byte
header followed by stage timings and the payload (see docs/protocol.md
for the frozen layout).  Frames are published latest-wins: a slow
client skips frames but never tears one, and never slows the loop.
"""

from __future__ import annotations

import asyncio
import base64
import json
import struct
import threading
import time
from collections import deque

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse
from starlette.concurrency import run_in_threadpool

from .engine import Frame, InteractiveSession
from .errors import DataError
from .meshio import TriMesh
from .modal import ForceEvent
from .splat import quaternion_from_rotation
from .voxel import SparseVoxelGrid

PROTOCOL_VERSION = 1
WIRE_MAGIC = b"SPTF"
WIRE_HEADER = struct.Struct("<4sB3xIf")  # magic, kind, pad, frame index, sim time
WIRE_TIMINGS = struct.Struct("<3f")      # modal, devoxelize, pose (ms)
KIND_VERTICES = 0
KIND_SPLATS = 1
TOTAL_BUDGET_MS = 18.22  # headline per-frame simulation budget shown by viewers


def encode_wire_frame(frame: Frame) -> bytes:
    """Binary frame: header (16 B) + timings (12 B) + float32 payload."""
    if frame.vertices is not None:
        kind = KIND_VERTICES
        payload = np.ascontiguousarray(frame.vertices, dtype="<f4").tobytes()
    else:
        kind = KIND_SPLATS
        sp = frame.splats
        quat = quaternion_from_rotation(sp.rotation)
        payload = np.concatenate([sp.mu, quat, sp.scale], axis=1).astype("<f4").tobytes()
    head = WIRE_HEADER.pack(WIRE_MAGIC, kind, frame.index, frame.time)
    t = frame.timings
    return head + WIRE_TIMINGS.pack(t.modal_ms, t.devox_ms, t.pose_ms) + payload


def parse_wire_frame(blob: bytes) -> dict:
    """Inverse of encode_wire_frame (used by tests and capture tooling)."""
    if len(blob) < WIRE_HEADER.size + WIRE_TIMINGS.size:
        raise DataError("wire frame too short")
    magic, kind, index, sim_time = WIRE_HEADER.unpack_from(blob, 0)
    if magic != WIRE_MAGIC:
        raise DataError("bad wire frame magic")
    timings = WIRE_TIMINGS.unpack_from(blob, WIRE_HEADER.size)
    payload = np.frombuffer(blob, dtype="<f4", offset=WIRE_HEADER.size + WIRE_TIMINGS.size)
    width = 3 if kind == KIND_VERTICES else 10
    if payload.size % width:
        raise DataError("wire frame payload length inconsistent with kind")
    return {
        "kind": kind,
        "index": index,
        "sim_time": sim_time,
        "timings_ms": timings,
        "payload": payload.reshape(-1, width),
    }


def resolve_pick(origin, direction, mesh: TriMesh, grid: SparseVoxelGrid) -> int | None:
    """Nearest ray-mesh intersection -> nearest face vertex -> its voxel."""
    o = np.asarray(origin, dtype=np.float64).reshape(3)
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(d)
    if not np.isfinite(norm) or norm == 0:
        raise DataError("pick direction must be a nonzero vector")
    d = d / norm

    verts, faces = mesh.vertices, mesh.faces
    v0 = verts[faces[:, 0]]
    e1 = verts[faces[:, 1]] - v0
    e2 = verts[faces[:, 2]] - v0
    eps = 1e-12
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        tvec = o - v0
        u = np.einsum("ij,ij->i", tvec, pvec) * inv
        qvec = np.cross(tvec, e1)
        v = (qvec @ d) * inv
        t = np.einsum("ij,ij->i", e2, qvec) * inv
        hit = (np.abs(det) > eps) & (u >= -1e-9) & (v >= -1e-9) & (u + v <= 1 + 1e-9) & (t > eps)
    if not hit.any():
        return None
    fi = np.flatnonzero(hit)[np.argmin(t[hit])]
    point = o + t[fi] * d
    corners = faces[fi]
    nearest = corners[np.argmin(np.linalg.norm(verts[corners] - point, axis=1))]
    return int(grid.vertex_to_voxel[nearest])


class LatestFrameCell:
    """Single-slot, latest-wins frame handoff between threads."""

    def __init__(self):
        self._cond = threading.Condition()
        self._frame: Frame | None = None

    def publish(self, frame: Frame) -> None:
        with self._cond:
            self._frame = frame
            self._cond.notify_all()

    def latest(self) -> Frame | None:
        with self._cond:
            return self._frame

    def wait_next(self, after_index: int, timeout: float) -> Frame | None:
        with self._cond:
            self._cond.wait_for(
                lambda: self._frame is not None and self._frame.index > after_index,
                timeout=timeout,
            )
            if self._frame is not None and self._frame.index > after_index:
                return self._frame
            return None


class SessionHost:
    """Owns the simulation loop thread and its in/out channels."""

    def __init__(self, session: InteractiveSession):
        self.session = session
        self.cell = LatestFrameCell()
        self._queue: deque = deque()
        self._queue_lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._recent = deque(maxlen=200)
        self._recent_lock = threading.Lock()
        self.dropped_intervals = 0
        self.started_at = time.time()

    # -- simulation-thread side ------------------------------------------

    def _drain(self) -> None:
        with self._queue_lock:
            pending = list(self._queue)
            self._queue.clear()
        for ev in pending:
            self.session.submit(ev)

    def step_once(self) -> Frame:
        """Advance one step and publish; also the manual-mode entry point."""
        self._drain()
        frame = self.session.advance()
        with self._recent_lock:
            self._recent.append(frame.timings)
        self.cell.publish(frame)
        return frame

    def _loop(self) -> None:
        dt = self.session.config.dt
        next_deadline = time.perf_counter() + dt
        while not self._stop.is_set():
            self.step_once()
            now = time.perf_counter()
            if now < next_deadline:
                time.sleep(next_deadline - now)
                next_deadline += dt
            else:
                # running behind: keep dt fixed, account for skipped publishes
                behind = int((now - next_deadline) / dt) + 1
                self.dropped_intervals += behind
                next_deadline += behind * dt + dt

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self._loop, name="spectree-sim", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    # -- connection side ---------------------------------------------------

    def submit_force(self, event: ForceEvent) -> dict:
        with self._queue_lock:
            self._queue.append(event)
        return {"type": "force_ack", "sim_time": self.session.state.time,
                "voxel": event.voxel}

    def payload_kind(self) -> str:
        return self.session.config.payload

    def snapshot(self) -> dict:
        mesh = self.session.mesh
        grid = self.session.grid
        cfg = self.session.config
        cloud = self.session.cloud
        return {
            "version": PROTOCOL_VERSION,
            "payload_kind": cfg.payload,
            "budget_ms": TOTAL_BUDGET_MS,
            "mesh": {
                "vertex_count": mesh.vertex_count,
                "face_count": mesh.face_count,
                "vertices_b64": base64.b64encode(
                    mesh.vertices.astype("<f4").tobytes()).decode("ascii"),
                "faces_b64": base64.b64encode(
                    mesh.faces.astype("<u4").tobytes()).decode("ascii"),
            },
            "grid": {
                "resolution": grid.resolution,
                "voxel_count": grid.voxel_count,
                "voxel_size": grid.voxel_size,
                "origin": [float(x) for x in grid.origin],
            },
            "splats": None if cloud is None else {
                "count": cloud.primitive_count,
                "per_face": cfg.per_face,
            },
            "config": {
                "dt": cfg.dt,
                "damping_ratio": cfg.damping_ratio,
                "force_scale": cfg.force_scale,
                "integrator": cfg.integrator,
            },
        }

    def metrics(self) -> dict:
        with self._recent_lock:
            recent = list(self._recent)
        def med(vals):
            return float(np.median(vals)) if vals else 0.0
        return {
            "frames": self.session.frame_index,
            "sim_time": self.session.state.time,
            "dropped_intervals": self.dropped_intervals,
            "recent_ms": {
                "modal": med([t.modal_ms for t in recent]),
                "devoxelize": med([t.devox_ms for t in recent]),
                "pose": med([t.pose_ms for t in recent]),
                "total": med([t.total_ms for t in recent]),
            },
            "budget_ms": TOTAL_BUDGET_MS,
        }


def _parse_force_message(msg: dict, host: SessionHost) -> tuple[ForceEvent | None, dict]:
    force = np.asarray(msg.get("force", ()), dtype=np.float64)
    if force.shape != (3,) or not np.all(np.isfinite(force)):
        raise DataError("force must be a finite 3-vector")
    duration = float(msg.get("duration", 0.25))
    if "voxel" in msg:
        voxel = int(msg["voxel"])
        if not 0 <= voxel < host.session.grid.voxel_count:
            raise DataError(f"voxel {voxel} out of range")
    elif "ray" in msg:
        ray = msg["ray"]
        voxel = resolve_pick(ray["origin"], ray["direction"],
                             host.session.mesh, host.session.grid)
        if voxel is None:
            return None, {"type": "miss"}
    else:
        raise DataError("force message needs 'voxel' or 'ray'")
    event = ForceEvent(voxel=voxel, force=force,
                       start=host.session.state.time, duration=duration)
    return event, host.submit_force(event)


def create_app(host: SessionHost) -> FastAPI:
    """FastAPI app exposing /health, /snapshot, /metrics, and /ws."""
    app = FastAPI(title="spectree gateway")
    app.state.host = host

    @app.get("/health", response_class=PlainTextResponse)
    async def health():
        return "ok"

    @app.get("/snapshot")
    async def snapshot():
        return host.snapshot()

    @app.get("/metrics")
    async def metrics():
        return host.metrics()

    async def _send_frames(ws: WebSocket):
        last = 0
        while True:
            frame = await run_in_threadpool(host.cell.wait_next, last, 0.05)
            if frame is None:
                await asyncio.sleep(0)  # yield; also a cancellation point
                continue
            last = frame.index
            await ws.send_bytes(encode_wire_frame(frame))

    async def _reject(ws: WebSocket, message: str, code: int) -> None:
        await ws.send_json({"type": "error", "message": message})
        await ws.close(code=code)

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        sender = asyncio.create_task(_send_frames(ws))
        try:
            while True:
                try:
                    text = await ws.receive_text()
                except (WebSocketDisconnect, RuntimeError):
                    break
                try:
                    msg = json.loads(text)
                    kind = msg.get("type")
                except Exception as exc:
                    await _reject(ws, f"malformed message: {exc}", 1003)
                    break
                try:
                    if kind == "hello":
                        if int(msg.get("version", -1)) != PROTOCOL_VERSION:
                            await _reject(
                                ws,
                                f"protocol version mismatch, server speaks {PROTOCOL_VERSION}",
                                1002,
                            )
                            break
                        reply = {"type": "hello", "version": PROTOCOL_VERSION,
                                 "payload_kind": host.payload_kind(),
                                 "vertex_count": host.session.mesh.vertex_count}
                        if host.session.cloud is not None:
                            reply["splat_count"] = host.session.cloud.primitive_count
                        await ws.send_json(reply)
                    elif kind == "snapshot":
                        await ws.send_json({"type": "snapshot", "snapshot": host.snapshot()})
                    elif kind == "force":
                        _, reply = _parse_force_message(msg, host)
                        await ws.send_json(reply)
                    else:
                        await _reject(ws, f"unknown message type {kind!r}", 1003)
                        break
                except DataError as exc:
                    await _reject(ws, str(exc), 1003)
                    break
        finally:
            sender.cancel()
            try:
                await sender
            except (asyncio.CancelledError, Exception):
                pass

    return app


def serve(host: SessionHost, port: int = 8787, bind: str = "127.0.0.1") -> None:
    """Run the gateway under uvicorn until interrupted."""
    import uvicorn

    host.start()
    try:
        uvicorn.run(create_app(host), host=bind, port=port, log_level="warning")
    finally:
        host.stop()
