import numpy as np
import pytest

from spectree.meshio import MotionSequence, TriMesh

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
from spectree.synth import SynthParams, WindField, Gust, grow_tree, simulate_wind, skin_motion
from spectree.voxel import build_grid


@pytest.fixture(scope="session")
def small_tree():
    """Deterministic three-level tree: (skeleton, mesh, skinning)."""
    params = SynthParams(depth=3, branches=(2, 2), seed=7)
    return grow_tree(params)


@pytest.fixture(scope="session")
def breezy_motion(small_tree):
    """A 100-frame wind take on the small tree, plus its grid."""
    skeleton, mesh, skinning = small_tree
    wind = WindField(np.array([1.0, 0.2, 0.0]), speed=0.15,
                     gusts=(Gust(0.05, 0.25), Gust(0.03, 0.45, 1.0)),
                     turbulence_seed=3)
    angles = simulate_wind(skeleton, wind, frames=100, fps=24.0)
    motion = skin_motion(skeleton, angles, mesh, skinning, fps=24.0)
    grid = build_grid(mesh, 64)
    return motion, grid


def sparse_points_mesh(rng, count=40, spacing=1.0):
    """Mesh whose vertices are farther apart than one voxel at R=32.

    Guarantees a bijection between vertices and occupied cells, which
    makes voxelize/devoxelize exactly invertible.
    """
    pts = []
    while len(pts) < count:
        cand = rng.uniform(0, 40.0, size=3)
        if all(np.linalg.norm(cand - p) > 2.0 * spacing for p in pts):
            pts.append(cand)
    pts = np.asarray(pts)
    faces = [[i, (i + 1) % count, (i + 2) % count] for i in range(count - 2)]
    return TriMesh(pts, faces)


def band_limited_motion(rng, vertex_count, frames=100, bins=16, fps=24.0, amplitude=1.0):
    """Random motion whose per-vertex DFT is supported on bins 0..bins-1."""
    t = np.arange(frames)
    coef = (rng.normal(size=(bins, vertex_count, 3))
            + 1j * rng.normal(size=(bins, vertex_count, 3)))
    coef[0] = coef[0].real
    phases = np.exp(2j * np.pi * np.outer(np.arange(bins), t) / frames)  # (bins, T)
    x = np.einsum("kvc,kt->tvc", coef, phases).real * (amplitude / bins)
    x -= x[0]  # rest frame; only shifts the DC bin
    return MotionSequence(x, fps)
