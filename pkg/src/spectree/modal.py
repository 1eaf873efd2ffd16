"""Interactive response by modal superposition.

Spectrum bins double as mode shapes: bin k is the complex displacement
pattern phi_k over voxels, oscillating at its natural frequency
omega_k = 2*pi*k*fps/T.  Each mode is an independent damped oscillator
in a complex modal coordinate q_k, driven by point forces projected
through the conjugated shape.  Superposing Re(sum phi_k * q_k) gives
the per-voxel displacement field.

The DC bin is excluded from dynamics: omega_0 = 0 would let a rooted
tree drift freely under any force.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DataError
from .spectrum import SparseVoxelSpectrum

DEFAULT_DAMPING_RATIO = 0.05
INTEGRATORS = ("semi_implicit", "explicit")


@dataclass(frozen=True)
class ModalBank:
    """Mode shapes and oscillator coefficients for bins 1..K-1."""

    shapes: np.ndarray        # (K-1, n, 3) complex, verbatim spectrum bins
    omegas: np.ndarray        # (K-1,) rad/s
    masses: np.ndarray
    dampings: np.ndarray
    stiffnesses: np.ndarray
    fps: float
    frame_count: int

    def __post_init__(self):
        shapes = np.ascontiguousarray(self.shapes, dtype=np.complex128)
        if shapes.ndim != 3 or shapes.shape[2] != 3 or shapes.shape[0] < 1:
            raise DataError(f"shapes must be (K-1 >= 1, n, 3), got {shapes.shape}")
        for name in ("omegas", "masses", "dampings", "stiffnesses"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (shapes.shape[0],):
                raise DataError(f"{name} must have one entry per dynamic mode")
            if np.any(arr <= 0):
                raise DataError(f"{name} entries must be > 0")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        shapes.setflags(write=False)
        object.__setattr__(self, "shapes", shapes)

    @property
    def mode_count(self) -> int:
        return self.shapes.shape[0]

    @property
    def voxel_count(self) -> int:
        return self.shapes.shape[1]

    @cached_property
    def _superpose_matrix(self) -> np.ndarray:
        # Re(sum phi_k q_k) = Re(q) @ Re(phi) - Im(q) @ Im(phi); stack both
        # halves so superposition is one real matmul.
        m = self.mode_count
        flat = self.shapes.reshape(m, -1)
        return np.concatenate([flat.real, -flat.imag], axis=0)


@dataclass(frozen=True)
class ModalState:
    """Complex modal coordinates and velocities at simulation time t."""

    q: np.ndarray
    q_dot: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        q = np.ascontiguousarray(self.q, dtype=np.complex128)
        q_dot = np.ascontiguousarray(self.q_dot, dtype=np.complex128)
        if q.shape != q_dot.shape or q.ndim != 1:
            raise DataError("q and q_dot must be matching 1-D arrays")
        if not (np.all(np.isfinite(q.view(np.float64))) and np.all(np.isfinite(q_dot.view(np.float64)))):
            raise DataError("non-finite modal state")
        q.setflags(write=False)
        q_dot.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "q_dot", q_dot)

    @classmethod
    def zero(cls, bank: ModalBank) -> "ModalState":
        return cls(np.zeros(bank.mode_count, dtype=np.complex128),
                   np.zeros(bank.mode_count, dtype=np.complex128), 0.0)

    def energy(self, bank: ModalBank) -> float:
        kinetic = 0.5 * bank.masses * np.abs(self.q_dot) ** 2
        elastic = 0.5 * bank.stiffnesses * np.abs(self.q) ** 2
        return float((kinetic + elastic).sum())


@dataclass(frozen=True)
class ForceEvent:
    """A constant point force on one voxel over [start, start + duration)."""

    voxel: int
    force: np.ndarray
    start: float = 0.0
    duration: float = 0.25

    def __post_init__(self):
        f = np.ascontiguousarray(self.force, dtype=np.float64)
        if f.shape != (3,) or not np.all(np.isfinite(f)):
            raise DataError("force must be a finite 3-vector")
        if self.duration <= 0:
            raise DataError("duration must be > 0")
        f.setflags(write=False)
        object.__setattr__(self, "force", f)

    def active_at(self, t: float) -> bool:
        return self.start <= t < self.start + self.duration


def build_bank(spectrum: SparseVoxelSpectrum,
               damping_ratio: float = DEFAULT_DAMPING_RATIO,
               mass: float = 1.0) -> ModalBank:
    """Mode shapes from spectrum bins 1..K-1; one global modal mass."""
    if spectrum.bin_count < 2:
        raise DataError("need K >= 2 for at least one dynamic mode")
    if not 0.0 < damping_ratio < 1.0:
        raise DataError("damping ratio must be in (0, 1)")
    if mass <= 0:
        raise DataError("modal mass must be > 0")
    K = spectrum.bin_count
    ks = np.arange(1, K)
    omegas = 2.0 * np.pi * ks * spectrum.fps / spectrum.frame_count
    masses = np.full(K - 1, mass)
    stiffnesses = masses * omegas**2
    dampings = 2.0 * damping_ratio * masses * omegas
    shapes = spectrum.coefficients.transpose(1, 0, 2)[1:K]
    return ModalBank(shapes, omegas, masses, dampings, stiffnesses,
                     spectrum.fps, spectrum.frame_count)


def project_force(bank: ModalBank, events, t: float) -> np.ndarray:
    """Modal forces f_k(t) = sum over active events of conj(phi_k[voxel]) . force."""
    out = np.zeros(bank.mode_count, dtype=np.complex128)
    for ev in events:
        if not 0 <= ev.voxel < bank.voxel_count:
            raise DataError(f"force targets voxel {ev.voxel}, bank has {bank.voxel_count}")
        if ev.active_at(t):
            out += np.conj(bank.shapes[:, ev.voxel, :]) @ ev.force
    return out


def step(bank: ModalBank, state: ModalState, modal_forces: np.ndarray, dt: float,
         integrator: str = "semi_implicit") -> ModalState:
    """Advance every mode by dt under the given modal forces.

    semi_implicit: velocity update from the old state, then position from
    the new velocity.  explicit: both updates from the old state (the
    classical first-order scheme).
    """
    if integrator not in INTEGRATORS:
        raise DataError(f"unknown integrator {integrator!r}, pick one of {INTEGRATORS}")
    if dt <= 0:
        raise DataError("dt must be > 0")
    if dt * bank.omegas[-1] >= 2.0:
        raise DataError(
            f"dt={dt} violates the stability guard dt*omega_max < 2 "
            f"(omega_max={bank.omegas[-1]:.3f})"
        )
    f = np.asarray(modal_forces, dtype=np.complex128)
    if f.shape != (bank.mode_count,):
        raise DataError("modal force vector does not match mode count")

    accel = lambda q, q_dot: (f - bank.dampings * q_dot - bank.stiffnesses * q) / bank.masses
    if integrator == "semi_implicit":
        q_dot = state.q_dot + dt * accel(state.q, state.q_dot)
        q = state.q + dt * q_dot
    else:
        q = state.q + dt * state.q_dot
        q_dot = state.q_dot + dt * accel(state.q, state.q_dot)
    return ModalState(q, q_dot, state.time + dt)


def superpose(bank: ModalBank, state: ModalState) -> np.ndarray:
    """Per-voxel displacement Re(sum_k phi_k * q_k), shape (n, 3)."""
    if state.q.shape != (bank.mode_count,):
        raise DataError("state does not match bank mode count")
    stacked = np.concatenate([state.q.real, state.q.imag])
    return (stacked @ bank._superpose_matrix).reshape(bank.voxel_count, 3)
