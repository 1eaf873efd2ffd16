"""Command-line entry point: synth / compress / animate / serve / bench.

Machine-readable output goes to stdout (JSON) or files; logs go to
stderr.  Exit codes: 0 ok, 2 usage, 3 data error, 4 runtime error.
SPECTREE_THREADS caps worker parallelism for batch generation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import struct
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import benchmark
from .engine import (SessionConfig, frame_stream_digest, load_event_log,
                     run_interactive)
from .errors import DataError, EngineError, SpectreeError
from .meshio import load_mesh, save_mesh
from .spectrum import (fft_compress, hf_energy_ratio, load_motion,
                       load_spectrum, lss_metric, save_motion, save_spectrum,
                       smooth_spectrum)
from .splat import bind, export_splats, pose, quaternion_from_rotation
from .synth import (Gust, SynthParams, WindField, curate, grow_tree,
                    simulate_wind, skin_motion)
from .voxel import build_grid, voxelize_motion

log = logging.getLogger("spectree")

POSES_MAGIC = b"SPPB"


def _worker_count(n_tasks: int) -> int:
    cap = os.environ.get("SPECTREE_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_tasks, limit))


def _default_wind(seed: int) -> WindField:
    rng = np.random.default_rng(seed ^ 0x5EED)
    gusts = tuple(
        Gust(amplitude=float(rng.uniform(0.02, 0.06)),
             frequency_hz=float(rng.uniform(0.05, 0.7)),
             phase=float(rng.uniform(0, 2 * np.pi)))
        for _ in range(3)
    )
    direction = np.array([1.0, rng.uniform(-0.3, 0.3), 0.0])
    return WindField(direction, speed=0.15, gusts=gusts, turbulence_seed=seed)


def _synth_one(params: SynthParams, seed: int, frames: int, fps: float,
               resolution: int, cut: int, tau: float, out_dir: Path, fmt: str) -> dict:
    p = SynthParams(**{**{f: getattr(params, f) for f in params.__dataclass_fields__},
                       "seed": seed})
    skeleton, mesh, skinning = grow_tree(p)
    wind = _default_wind(seed)
    angles = simulate_wind(skeleton, wind, frames, fps)
    motion = skin_motion(skeleton, angles, mesh, skinning, fps)
    grid = build_grid(mesh, resolution)
    report = curate(motion, grid, cut, tau)

    entry = {"seed": seed, "hf_ratio": report.hf_ratio, "accepted": report.accepted,
             "vertices": mesh.vertex_count, "faces": mesh.face_count,
             "nodes": skeleton.node_count}
    if report.accepted:
        sample_dir = out_dir / f"sample_{seed:05d}"
        sample_dir.mkdir(parents=True, exist_ok=True)
        save_mesh(mesh, sample_dir / f"tree.{fmt}")
        save_motion(motion, sample_dir / "motion.motn")
        (sample_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
        entry["path"] = str(sample_dir)
    return entry


def cmd_synth(args) -> int:
    params = SynthParams.from_json(args.params)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [args.seed + i for i in range(args.count)]
    with ThreadPoolExecutor(max_workers=_worker_count(len(seeds))) as pool:
        entries = list(pool.map(
            lambda s: _synth_one(params, s, args.frames, args.fps, args.resolution,
                                 args.cut, args.tau, out_dir, args.format),
            seeds,
        ))
    accepted = [e for e in entries if e["accepted"]]
    rejected = [e for e in entries if not e["accepted"]]
    batch = {"samples": entries, "accepted": len(accepted), "rejected": len(rejected)}
    (out_dir / "report.json").write_text(json.dumps(batch, indent=2))
    json.dump(batch, sys.stdout, indent=2)
    print()
    log.info("synth: %d accepted, %d rejected", len(accepted), len(rejected))
    return 0


def cmd_compress(args) -> int:
    motion = load_motion(args.motion)
    mesh = load_mesh(args.mesh)
    if mesh.vertex_count != motion.vertex_count:
        raise DataError(
            f"mesh has {mesh.vertex_count} vertices, motion {motion.vertex_count}")
    fps = args.fps if args.fps is not None else motion.fps
    grid = build_grid(mesh, args.resolution)
    voxel_motion = voxelize_motion(motion, grid)
    spectrum = fft_compress(voxel_motion, args.bins, grid, fps)
    if args.smooth > 0:
        spectrum = smooth_spectrum(spectrum, steps=args.smooth)
    save_spectrum(spectrum, args.out)
    if args.report:
        json.dump({
            "voxels": grid.voxel_count,
            "bins": spectrum.bin_count,
            "hf_ratio": hf_energy_ratio(voxel_motion, args.bins),
            "lss": lss_metric(spectrum),
        }, sys.stdout, indent=2)
        print()
    return 0


def _write_poses(path: Path, poses) -> None:
    """SPPB: magic, G u32, T u32, then per frame G x 10 f32 (mu quat scale)."""
    G = poses[0].primitive_count
    with open(path, "wb") as fh:
        fh.write(POSES_MAGIC)
        fh.write(struct.pack("<II", G, len(poses)))
        for sp in poses:
            quat = quaternion_from_rotation(sp.rotation)
            fh.write(np.concatenate([sp.mu, quat, sp.scale], axis=1)
                     .astype("<f4").tobytes())


def _check_grid_matches(mesh, spectrum) -> None:
    grid = spectrum.grid
    if grid.vertex_count != mesh.vertex_count:
        raise DataError("spectrum grid does not match the mesh (vertex count differs)")
    rebuilt = build_grid(mesh, grid.resolution)
    if (rebuilt.voxel_count != grid.voxel_count
            or not np.array_equal(rebuilt.occupied, grid.occupied)
            or not np.array_equal(rebuilt.vertex_to_voxel, grid.vertex_to_voxel)):
        raise DataError("spectrum grid does not match the mesh (quantization differs)")


def cmd_animate(args) -> int:
    mesh = load_mesh(args.mesh)
    spectrum = load_spectrum(args.spectrum)
    _check_grid_matches(mesh, spectrum)
    from .spectrum import reconstruct_motion

    recon = reconstruct_motion(spectrum)
    cloud = bind(mesh, args.per_face)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    poses = []
    prev = cloud.rest_pose
    for t in range(recon.frame_count):
        prev = pose(cloud, mesh.vertices + recon.displacements[t], prev=prev)
        poses.append(prev)

    export_splats(cloud, cloud.rest_pose, out_dir / "splats_rest.ply")
    _write_poses(out_dir / "poses.bin", poses)
    if args.export_frames:
        for t, sp in enumerate(poses):
            export_splats(cloud, sp, out_dir / f"splats_{t:04d}.ply")
    report = {
        "frames": recon.frame_count,
        "splats": cloud.primitive_count,
        "per_face": args.per_face,
        "max_displacement": float(np.abs(recon.displacements).max()),
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2))
    json.dump(report, sys.stdout, indent=2)
    print()
    return 0


def cmd_serve(args) -> int:
    mesh = load_mesh(args.mesh)
    spectrum = load_spectrum(args.spectrum)
    _check_grid_matches(mesh, spectrum)
    config = SessionConfig(dt=args.dt, damping_ratio=args.xi,
                           force_scale=args.force_scale, integrator=args.integrator,
                           payload=args.payload, per_face=args.per_face)
    if args.replay:
        events = load_event_log(args.replay)
        frames = run_interactive(mesh, spectrum, config, events, args.frames)
        digest = frame_stream_digest(frames)
        json.dump({"frames": args.frames, "digest": digest}, sys.stdout, indent=2)
        print()
        return 0

    from .engine import InteractiveSession
    from .gateway import SessionHost, serve

    host = SessionHost(InteractiveSession(mesh, spectrum, config))
    log.info("serving on port %d (dt=%.4fs, payload=%s)", args.port, args.dt, args.payload)
    serve(host, port=args.port, bind=args.bind)
    return 0


def cmd_bench(args) -> int:
    report = benchmark.run_benchmark(
        frames=args.frames, seed=args.seed,
        voxels=args.voxels, vertices=args.vertices, faces=args.faces,
    )
    if args.json:
        import jsonschema

        jsonschema.validate(report, benchmark.BENCH_REPORT_SCHEMA)
        json.dump(report, sys.stdout, indent=2)
        print()
    else:
        for stage, st in report["stages_ms"].items():
            print(f"{stage}: median {st['median']:.3f} ms, p95 {st['p95']:.3f} ms")
        print(f"within budget (2x allowance): {report['within_budget']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectree",
        description="Spectral tree-motion toolkit: synthesize, compress, animate, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate wind-animated trees and curate them")
    p.add_argument("params", help="JSON file mirroring SynthParams fields")
    p.add_argument("out_dir")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--fps", type=float, default=24.0)
    p.add_argument("-R", "--resolution", type=int, default=128)
    p.add_argument("--cut", type=int, default=16, help="curation cutoff bin")
    p.add_argument("--tau", type=float, default=0.1, help="curation HF-ratio threshold")
    p.add_argument("--format", choices=("ply", "obj"), default="ply")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("compress", help="motion + mesh -> sparse voxel spectrum")
    p.add_argument("motion", help="MOTN motion file")
    p.add_argument("out", help="output SVSP file")
    p.add_argument("--mesh", required=True, help="rest mesh the motion belongs to")
    p.add_argument("-R", "--resolution", type=int, default=128)
    p.add_argument("-K", "--bins", type=int, default=16)
    p.add_argument("--fps", type=float, default=None, help="override the MOTN frame rate")
    p.add_argument("--smooth", type=int, default=0, help="LSS smoothing steps")
    p.add_argument("--report", action="store_true", help="print hf ratio and LSS to stdout")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("animate", help="spectrum -> splat poses")
    p.add_argument("mesh")
    p.add_argument("spectrum", help="SVSP file")
    p.add_argument("out_dir")
    p.add_argument("--per-face", type=int, default=5, dest="per_face")
    p.add_argument("--export-frames", action="store_true",
                   help="also write one splat PLY per frame")
    p.set_defaults(func=cmd_animate)

    p = sub.add_parser("serve", help="run the interactive gateway")
    p.add_argument("mesh")
    p.add_argument("spectrum", help="SVSP file")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--dt", type=float, default=1.0 / 60.0)
    p.add_argument("--xi", type=float, default=0.05, help="modal damping ratio")
    p.add_argument("--force-scale", type=float, default=1.0, dest="force_scale")
    p.add_argument("--integrator", choices=("semi_implicit", "explicit"),
                   default="semi_implicit")
    p.add_argument("--payload", choices=("vertices", "splats"), default="vertices")
    p.add_argument("--per-face", type=int, default=5, dest="per_face")
    p.add_argument("--replay", metavar="EVENTS_JSONL",
                   help="replay a recorded event log offline and print its digest")
    p.add_argument("--frames", type=int, default=600,
                   help="frame count for --replay")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="time the interactive stages on the pinned instance")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--voxels", type=int, default=20_000)
    p.add_argument("--vertices", type=int, default=100_000)
    p.add_argument("--faces", type=int, default=40_000)
    p.add_argument("--json", action="store_true",
                   help="emit the schema-validated JSON report")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        log.error("%s", exc)
        return 3
    except (EngineError, SpectreeError, OSError) as exc:
        log.error("%s", exc)
        return 4


if __name__ == "__main__":
    sys.exit(main())
