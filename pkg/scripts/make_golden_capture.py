#!/usr/bin/env python3
"""Freeze a snapshot + 100 wire frames for protocol conformance tests.

The capture is bit-reproducible: the simulation is deterministic and
the per-frame timing fields are replaced by fixed sentinels (timings
are measurements, not simulation state).
"""

import argparse
import json
import struct
from pathlib import Path

import numpy as np

from spectree.engine import (Frame, FrameTimings, InteractiveSession,
                             SessionConfig)
from spectree.gateway import SessionHost, encode_wire_frame
from spectree.modal import ForceEvent
from spectree.spectrum import fft_compress
from spectree.synth import SynthParams, grow_tree
from spectree.voxel import build_grid, voxelize_motion

import sys
sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from conftest import band_limited_motion  # noqa: E402

FIXED_TIMINGS = FrameTimings(modal_ms=1.5, devox_ms=0.5, pose_ms=0.25)


def build_capture(out_dir: Path, frames: int = 100) -> None:
    _, mesh, _ = grow_tree(SynthParams(depth=3, branches=(2, 2), seed=7))
    grid = build_grid(mesh, 64)
    motion = band_limited_motion(np.random.default_rng(2024), mesh.vertex_count,
                                 frames=100, bins=16)
    spectrum = fft_compress(voxelize_motion(motion, grid), 16, grid)
    session = InteractiveSession(mesh, spectrum, SessionConfig())
    host = SessionHost(session)

    session.submit(ForceEvent(voxel=3, force=np.array([6.0, 1.0, 0.0]),
                              start=0.1, duration=0.4))
    session.submit(ForceEvent(voxel=9, force=np.array([0.0, -3.0, 2.0]),
                              start=0.8, duration=0.3))

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "snapshot.json").write_text(
        json.dumps(host.snapshot(), indent=2, sort_keys=True) + "\n")

    with open(out_dir / "frames.bin", "wb") as fh:
        for _ in range(frames):
            frame = session.advance()
            stable = Frame(frame.index, frame.time, frame.vertices,
                           frame.splats, FIXED_TIMINGS)
            blob = encode_wire_frame(stable)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
    print(f"wrote {out_dir / 'snapshot.json'} and {frames} frames "
          f"({(out_dir / 'frames.bin').stat().st_size} bytes)")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="frontend/tests/golden")
    parser.add_argument("--frames", type=int, default=100)
    args = parser.parse_args()
    build_capture(Path(args.out), args.frames)
