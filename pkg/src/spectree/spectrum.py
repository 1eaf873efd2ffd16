"""Truncated temporal spectra of voxel motion, and their metrics.

A spectrum keeps the first K complex DFT bins per voxel per axis.  The
DFT convention is pinned so serialized numbers are reproducible:
unnormalized forward transform, 1/T inverse, and a factor 2 on bins
1..K-1 standing in for the discarded conjugate half (valid because
K <= T/2 keeps everything strictly below the Nyquist bin).

Also here: the local-spectrum-smoothness (LSS) metric - a distance
weighted discrepancy between each voxel's spectrum and its kappa nearest
neighbors - plus a gradient-descent smoother that minimizes it, and the
high-frequency energy ratio used to cull jittery motion samples.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .meshio import MotionSequence, neighbor_table
from .voxel import SparseVoxelGrid, VoxelMotion, devoxelize_frames

DEFAULT_BINS = 16
DEFAULT_FPS = 24.0


@dataclass(frozen=True)
class LssConfig:
    """Neighborhood and weighting parameters for the LSS metric."""

    kappa: int = 5       # neighbors per site
    alpha: float = 0.5   # distance decay, 1 / model unit
    lam: float = 0.5     # imaginary-part weight

    def __post_init__(self):
        if self.kappa < 1:
            raise DataError("kappa must be >= 1")
        if self.alpha < 0 or self.lam < 0:
            raise DataError("alpha and lam must be >= 0")


@dataclass(frozen=True)
class SparseVoxelSpectrum:
    """K retained DFT bins per voxel per axis, (n, K, 3) complex."""

    coefficients: np.ndarray
    frame_count: int
    fps: float
    grid: SparseVoxelGrid

    def __post_init__(self):
        coef = np.ascontiguousarray(self.coefficients, dtype=np.complex128)
        if coef.ndim != 3 or coef.shape[2] != 3:
            raise DataError(f"coefficients must be (n, K, 3), got {coef.shape}")
        if coef.shape[0] != self.grid.voxel_count:
            raise DataError("coefficient voxel count does not match grid")
        if coef.shape[1] > self.frame_count // 2:
            raise DataError("K must satisfy K <= floor(T/2)")
        if not np.all(np.isfinite(coef.view(np.float64))):
            raise DataError("non-finite spectrum coefficient")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    @property
    def voxel_count(self) -> int:
        return self.coefficients.shape[0]

    @property
    def bin_count(self) -> int:
        return self.coefficients.shape[1]

    def bin_frequency_hz(self, k: int) -> float:
        return k * self.fps / self.frame_count

    def with_coefficients(self, coef: np.ndarray) -> "SparseVoxelSpectrum":
        return SparseVoxelSpectrum(coef, self.frame_count, self.fps, self.grid)


def temporal_spectrum(signal: np.ndarray, bins: int) -> np.ndarray:
    """First `bins` unnormalized DFT coefficients along axis 0.

    coefficient[k] = sum_t signal[t] * exp(-2i*pi*k*t/T).
    """
    signal = np.asarray(signal, dtype=np.float64)
    T = signal.shape[0]
    if T < 4:
        raise DataError("need at least 4 frames for a spectrum")
    if not 1 <= bins <= T // 2:
        raise DataError(f"bins={bins} must satisfy 1 <= bins <= floor(T/2)={T // 2}")
    return np.fft.fft(signal, axis=0)[:bins]


def fft_compress(motion: VoxelMotion, bins: int = DEFAULT_BINS,
                 grid: SparseVoxelGrid | None = None,
                 fps: float | None = None) -> SparseVoxelSpectrum:
    """Compress voxel motion to its first `bins` temporal DFT bins."""
    if grid is None:
        raise DataError("fft_compress needs the grid the motion was voxelized on")
    if motion.voxel_count != grid.voxel_count:
        raise DataError("voxel motion does not match grid")
    coef = temporal_spectrum(motion.displacements, bins)  # (K, n, 3)
    return SparseVoxelSpectrum(
        coef.transpose(1, 0, 2), motion.frame_count, fps if fps is not None else motion.fps, grid
    )


def reconstruct_voxel_motion(spectrum: SparseVoxelSpectrum) -> VoxelMotion:
    """Inverse-DFT the truncated spectrum back to per-voxel motion.

    x[t] = (1/T) * Re(X[0] + 2 * sum_{k=1}^{K-1} X[k] * exp(+2i*pi*k*t/T)),
    with frame 0 re-zeroed afterwards: truncation shifts the rest pose a
    little, so x[0] is subtracted from every frame to restore the rest
    frame contract.
    """
    T, K = spectrum.frame_count, spectrum.bin_count
    coef = spectrum.coefficients.transpose(1, 0, 2)  # (K, n, 3)
    full = np.zeros((T,) + coef.shape[1:], dtype=np.complex128)
    full[:K] = coef
    if K > 1:  # hermitian extension of the discarded conjugate bins
        full[T - K + 1:] = np.conj(coef[1:K][::-1])
    frames = np.fft.ifft(full, axis=0).real
    frames -= frames[0]
    frames[0] = 0.0
    return VoxelMotion(frames, spectrum.fps)


def reconstruct_motion(spectrum: SparseVoxelSpectrum,
                       grid: SparseVoxelGrid | None = None) -> MotionSequence:
    """Dense mesh motion: devoxelized inverse DFT of the spectrum."""
    grid = grid if grid is not None else spectrum.grid
    if grid.voxel_count != spectrum.voxel_count:
        raise DataError("spectrum was not built on this grid")
    voxel = reconstruct_voxel_motion(spectrum)
    return MotionSequence(devoxelize_frames(voxel.displacements, grid), spectrum.fps)


def hf_energy_ratio(motion: VoxelMotion, cut: int = DEFAULT_BINS) -> float:
    """Fraction of non-DC spectral energy at or above bin `cut`.

    Energies are summed over the non-redundant half spectrum
    (bins 1..floor(T/2)), over all voxels and axes.  Static motion has no
    non-DC energy and returns 0 by convention; a cut beyond the half
    spectrum leaves the numerator an empty sum, also 0.
    """
    T = motion.frame_count
    if cut < 0:
        raise DataError("cut must be >= 0")
    spec = np.fft.fft(motion.displacements, axis=0)[: T // 2 + 1]
    energy = np.abs(spec) ** 2
    total = float(energy[1:].sum())
    if total == 0.0:
        return 0.0
    high = float(energy[max(cut, 1):].sum())
    return high / total


# ---------------------------------------------------------------------------
# local spectrum smoothness


def _lss_terms(coef: np.ndarray, positions: np.ndarray, cfg: LssConfig):
    n = coef.shape[0]
    if positions.shape[0] != n:
        raise DataError("positions length must equal voxel count")
    if cfg.kappa >= n:
        raise DataError(f"kappa={cfg.kappa} must be < number of sites n={n}")
    nbr, dist = neighbor_table(positions, cfg.kappa)
    re = coef.real.reshape(n, -1)
    im = coef.imag.reshape(n, -1)
    w = np.exp(-cfg.alpha * dist)  # (n, kappa)
    dre = re[:, None, :] - re[nbr]  # (n, kappa, 3K)
    dim = im[:, None, :] - im[nbr]
    re_norm = np.linalg.norm(dre, axis=2)
    im_norm = np.linalg.norm(dim, axis=2)
    return nbr, w, dre, dim, re_norm, im_norm


def lss_metric(spectrum: SparseVoxelSpectrum, positions: np.ndarray | None = None,
               cfg: LssConfig = LssConfig()) -> float:
    """Distance-weighted spectral discrepancy over kappa-NN pairs.

    (1/n) * sum_i sum_{j in N(i)} exp(-alpha*d_ij) *
(||Re_i - Re_j|| + lam * ||Im_i - Im_j||)

    with each site's real (resp. imaginary) parts flattened over all bins
    and axes into one vector per site.  Zero iff every neighbor pair has
    an identical spectrum.
    """
    if positions is None:
        positions = spectrum.grid.voxel_centers()
    positions = np.asarray(positions, dtype=np.float64)
    _, w, _, _, re_norm, im_norm = _lss_terms(spectrum.coefficients, positions, cfg)
    n = spectrum.voxel_count
    return float((w * (re_norm + cfg.lam * im_norm)).sum() / n)


def lss_per_bin(spectrum: SparseVoxelSpectrum, positions: np.ndarray | None = None,
                cfg: LssConfig = LssConfig()) -> np.ndarray:
    """Diagnostic breakdown: the metric evaluated one bin at a time.

    Note the per-bin values do not sum to `lss_metric` (the joint form
    takes one norm over all bins); they locate which bins disagree.
    """
    if positions is None:
        positions = spectrum.grid.voxel_centers()
    positions = np.asarray(positions, dtype=np.float64)
    out = np.empty(spectrum.bin_count)
    for k in range(spectrum.bin_count):
        single = spectrum.coefficients[:, k:k + 1, :]
        _, w, _, _, re_norm, im_norm = _lss_terms(single, positions, cfg)
        out[k] = (w * (re_norm + cfg.lam * im_norm)).sum() / spectrum.voxel_count
    return out


def _lss_gradient(coef: np.ndarray, positions: np.ndarray, cfg: LssConfig):
    """Metric value and its gradient w.r.t. the flattened coefficients."""
    n = coef.shape[0]
    nbr, w, dre, dim, re_norm, im_norm = _lss_terms(coef, positions, cfg)
    value = float((w * (re_norm + cfg.lam * im_norm)).sum() / n)

    # subgradient 0 where a difference vanishes
    with np.errstate(invalid="ignore", divide="ignore"):
        ure = np.where(re_norm[..., None] > 0, dre / re_norm[..., None], 0.0)
        uim = np.where(im_norm[..., None] > 0, dim / im_norm[..., None], 0.0)
    gre_pair = (w[..., None] * ure) / n          # (n, kappa, 3K)
    gim_pair = (w[..., None] * uim) * (cfg.lam / n)

    grad_re = gre_pair.sum(axis=1)
    grad_im = gim_pair.sum(axis=1)
    np.add.at(grad_re, nbr.ravel(), -gre_pair.reshape(-1, gre_pair.shape[2]))
    np.add.at(grad_im, nbr.ravel(), -gim_pair.reshape(-1, gim_pair.shape[2]))
    if not (np.all(np.isfinite(grad_re)) and np.all(np.isfinite(grad_im))):
        raise DataError("non-finite LSS gradient")
    return value, grad_re, grad_im


def smooth_spectrum(spectrum: SparseVoxelSpectrum, positions: np.ndarray | None = None,
                    cfg: LssConfig = LssConfig(), steps: int = 10,
                    step_size: float = 0.1) -> SparseVoxelSpectrum:
    """Gradient-descent the spectrum toward lower LSS.

    The metric is non-increasing across steps: any step that would raise
    it is retried with a halved length until it does not (or becomes
    negligible).
    """
    if steps < 1:
        raise DataError("steps must be >= 1")
    if positions is None:
        positions = spectrum.grid.voxel_centers()
    positions = np.asarray(positions, dtype=np.float64)

    n = spectrum.voxel_count
    re = spectrum.coefficients.real.reshape(n, -1).copy()
    im = spectrum.coefficients.imag.reshape(n, -1).copy()

    def pack():
        return (re + 1j * im).reshape(spectrum.coefficients.shape)

    value, grad_re, grad_im = _lss_gradient(pack(), positions, cfg)
    for _ in range(steps):
        if value == 0.0:
            break
        step = step_size
        for _ in range(60):
            cand_re = re - step * grad_re
            cand_im = im - step * grad_im
            cand_val, cand_gre, cand_gim = _lss_gradient(
                (cand_re + 1j * cand_im).reshape(spectrum.coefficients.shape), positions, cfg
            )
            if cand_val <= value:
                re, im = cand_re, cand_im
                value, grad_re, grad_im = cand_val, cand_gre, cand_gim
                break
            step *= 0.5
        # all halvings violated: keep the current iterate
    return spectrum.with_coefficients(pack())


# ---------------------------------------------------------------------------
# file formats (all little-endian)

MOTN_MAGIC = b"MOTN"
SVSP_MAGIC = b"SVSP"
SVSP_VERSION = 1


def save_motion(motion: MotionSequence, path) -> None:
    """MOTN: magic, N u32, T u32, fps f32, then T*N*3 float32 frames."""
    with open(Path(path), "wb") as fh:
        fh.write(MOTN_MAGIC)
        fh.write(struct.pack("<IIf", motion.vertex_count, motion.frame_count, motion.fps))
        fh.write(motion.displacements.astype("<f4").tobytes())


def load_motion(path) -> MotionSequence:
    data = Path(path).read_bytes()
    if data[:4] != MOTN_MAGIC:
        raise DataError(f"{path}: not a MOTN file")
    N, T, fps = struct.unpack_from("<IIf", data, 4)
    if len(data) < 16 + T * N * 3 * 4:
        raise DataError(f"{path}: truncated MOTN payload")
    body = np.frombuffer(data, dtype="<f4", count=T * N * 3, offset=16)
    disp = body.reshape(T, N, 3).astype(np.float64)
    if np.any(disp[0] != 0.0):  # float32 storage preserves an exact zero
        raise DataError(f"{path}: rest frame is not zero; file is corrupt")
    return MotionSequence(disp, float(fps))


def save_spectrum(spectrum: SparseVoxelSpectrum, path) -> None:
    """SVSP: header, occupied cells u16, vertex map u32, coefficients f32.

    Coefficients are 6 reals per (voxel, bin): Re(x, y, z) then Im(x, y, z).
    The grid origin / cell size / vertex count ride along so the file is
    self-contained.
    """
    grid = spectrum.grid
    with open(Path(path), "wb") as fh:
        fh.write(SVSP_MAGIC)
        fh.write(struct.pack(
            "<IIIIIfI",
            SVSP_VERSION, grid.resolution, grid.voxel_count,
            spectrum.bin_count, spectrum.frame_count, spectrum.fps,
            grid.vertex_count,
        ))
        fh.write(struct.pack("<3dd", *grid.origin, grid.voxel_size))
        fh.write(grid.occupied.astype("<u2").tobytes())
        fh.write(grid.vertex_to_voxel.astype("<u4").tobytes())
        coef = spectrum.coefficients
        packed = np.stack([coef.real, coef.imag], axis=2)  # (n, K, 2, 3)
        fh.write(packed.astype("<f4").tobytes())


def load_spectrum(path) -> SparseVoxelSpectrum:
    data = Path(path).read_bytes()
    if data[:4] != SVSP_MAGIC:
        raise DataError(f"{path}: not an SVSP file")
    version, R, n, K, T, fps, N = struct.unpack_from("<IIIIIfI", data, 4)
    if version != SVSP_VERSION:
        raise DataError(f"{path}: unsupported SVSP version {version}")
    header = 4 + struct.calcsize("<IIIIIfI") + struct.calcsize("<3dd")
    expected = header + n * 3 * 2 + N * 4 + n * K * 6 * 4
    if len(data) < expected:
        raise DataError(f"{path}: truncated SVSP payload ({len(data)} < {expected} bytes)")
    off = 4 + struct.calcsize("<IIIIIfI")
    ox, oy, oz, voxel_size = struct.unpack_from("<3dd", data, off)
    off += struct.calcsize("<3dd")
    occupied = np.frombuffer(data, dtype="<u2", count=n * 3, offset=off).reshape(n, 3)
    off += n * 3 * 2
    v2v = np.frombuffer(data, dtype="<u4", count=N, offset=off)
    off += N * 4
    packed = np.frombuffer(data, dtype="<f4", count=n * K * 6, offset=off)
    packed = packed.astype(np.float64).reshape(n, K, 2, 3)
    coef = packed[:, :, 0, :] + 1j * packed[:, :, 1, :]
    grid = SparseVoxelGrid(int(R), np.array([ox, oy, oz]), float(voxel_size),
                           occupied.astype(np.int64), v2v.astype(np.int64))
    return SparseVoxelSpectrum(coef, int(T), float(fps), grid)
