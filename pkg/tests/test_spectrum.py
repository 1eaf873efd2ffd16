import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectree.errors import DataError
from spectree.spectrum import (LssConfig, SparseVoxelSpectrum, fft_compress,
                               hf_energy_ratio, load_motion, load_spectrum,
                               lss_metric, reconstruct_motion,
                               reconstruct_voxel_motion, save_motion,
                               save_spectrum, smooth_spectrum,
                               temporal_spectrum)
from spectree.voxel import VoxelMotion, build_grid, voxelize_motion

from conftest import band_limited_motion, sparse_points_mesh


def dft_oracle(signal, k):
    """Direct DFT summation, kept independent of numpy.fft."""
    T = len(signal)
    t = np.arange(T)
    return complex(np.sum(signal * np.exp(-2j * np.pi * k * t / T)))


def two_voxel_grid():
    """Two occupied cells at distance 2 apart (voxel centers)."""
    pts = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    return build_grid(pts, 32), pts


class TestTemporalSpectrum:
    def test_zero_motion_zero_coefficients(self):
        assert np.all(temporal_spectrum(np.zeros((50, 4, 3)), 16) == 0)

    def test_cosine_lands_on_its_bin(self):
        t = np.arange(100)
        x = np.cos(2 * np.pi * 3 * t / 100)
        coef = temporal_spectrum(x, 16)
        assert abs(coef[3] - 50.0) < 1e-9
        others = np.abs(np.delete(coef, 3))
        assert others.max() < 1e-9
        assert abs(coef[3] - dft_oracle(x, 3)) < 1e-9

    def test_sine_lands_negative_imaginary(self):
        t = np.arange(100)
        x = np.sin(2 * np.pi * 2 * t / 100)
        coef = temporal_spectrum(x, 16)
        assert abs(coef[2] - (-50j)) < 1e-9
        assert abs(coef[2] - dft_oracle(x, 2)) < 1e-9

    def test_matches_oracle_on_random_signal(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=64)
        coef = temporal_spectrum(x, 32)
        for k in range(32):
            assert abs(coef[k] - dft_oracle(x, k)) < 1e-9 * max(1.0, abs(coef[k]))

    def test_bin_budget_enforced(self):
        with pytest.raises(DataError):
            temporal_spectrum(np.zeros((10, 1, 3)), 6)  # floor(10/2)=5
        with pytest.raises(DataError):
            temporal_spectrum(np.zeros((3, 1, 3)), 1)   # T >= 4


class TestCompress:
    def test_shapes_and_metadata(self, breezy_motion):
        motion, grid = breezy_motion
        vm = voxelize_motion(motion, grid)
        spec = fft_compress(vm, 16, grid)
        assert spec.coefficients.shape == (grid.voxel_count, 16, 3)
        assert spec.frame_count == 100
        assert spec.fps == 24.0

    def test_dc_bin_real_for_real_motion(self, breezy_motion):
        motion, grid = breezy_motion
        spec = fft_compress(voxelize_motion(motion, grid), 16, grid)
        assert np.abs(spec.coefficients[:, 0, :].imag).max() < 1e-9

    def test_linearity(self, breezy_motion):
        motion, grid = breezy_motion
        rng = np.random.default_rng(11)
        x = voxelize_motion(motion, grid).displacements
        y = rng.normal(size=x.shape)
        y[0] = 0
        a, b = 2.5, -1.25
        combo = VoxelMotion(a * x + b * y, motion.fps)
        left = fft_compress(combo, 16, grid).coefficients
        right = (a * fft_compress(VoxelMotion(x, motion.fps), 16, grid).coefficients
                 + b * fft_compress(VoxelMotion(y, motion.fps), 16, grid).coefficients)
        scale = np.abs(right).max()
        np.testing.assert_allclose(left, right, atol=1e-9 * max(scale, 1.0))


class TestReconstruct:
    def test_zero_spectrum_zero_motion(self, breezy_motion):
        _, grid = breezy_motion
        spec = SparseVoxelSpectrum(np.zeros((grid.voxel_count, 16, 3), complex),
                                   100, 24.0, grid)
        recon = reconstruct_motion(spec)
        assert np.all(recon.displacements == 0)

    def test_band_limited_roundtrip(self):
        rng = np.random.default_rng(7)
        mesh = sparse_points_mesh(rng, count=15)
        grid = build_grid(mesh, 32)
        motion = band_limited_motion(rng, mesh.vertex_count, frames=100, bins=16)
        vm = voxelize_motion(motion, grid)
        spec = fft_compress(vm, 16, grid)
        recon = reconstruct_motion(spec)
        scale = np.abs(motion.displacements).max()
        err = np.abs(recon.displacements - motion.displacements).max()
        assert err <= 1e-6 * scale

    def test_truncation_obeys_parseval(self, breezy_motion):
        motion, grid = breezy_motion
        vm = voxelize_motion(motion, grid)
        spec = fft_compress(vm, 16, grid)
        coef = spec.coefficients  # (n, K, 3)
        T = vm.frame_count
        retained = (np.abs(coef[:, 0]) ** 2 + 2 * (np.abs(coef[:, 1:]) ** 2).sum(axis=1)) / T
        time_energy = (vm.displacements**2).sum(axis=0)  # (n, 3)
        assert np.all(retained <= time_energy + 1e-9)
        # per-voxel reconstructed energy never exceeds the original
        recon = reconstruct_voxel_motion(spec)
        rec_shifted = recon.displacements - recon.displacements.mean(axis=0)
        src_shifted = vm.displacements - vm.displacements.mean(axis=0)
        assert np.all((rec_shifted**2).sum(axis=0) <= (src_shifted**2).sum(axis=0) + 1e-9)

    def test_grid_mismatch_rejected(self, breezy_motion):
        motion, grid = breezy_motion
        other_grid = build_grid(np.array([[0.0, 0, 0], [5.0, 5, 5]]), 32)
        spec = fft_compress(voxelize_motion(motion, grid), 16, grid)
        with pytest.raises(DataError):
            reconstruct_motion(spec, other_grid)

    def test_rest_frame_restored(self, breezy_motion):
        motion, grid = breezy_motion
        spec = fft_compress(voxelize_motion(motion, grid), 8, grid)
        recon = reconstruct_motion(spec)
        assert np.all(recon.displacements[0] == 0.0)


class TestHfRatio:
    def _single_tone(self, bin_k, frames=100):
        t = np.arange(frames)
        x = np.zeros((frames, 1, 3))
        x[:, 0, 0] = np.sin(2 * np.pi * bin_k * t / frames)
        return VoxelMotion(x, 24.0)

    def test_low_tone_ratio_zero(self):
        assert hf_energy_ratio(self._single_tone(2), 16) == pytest.approx(0.0, abs=1e-12)

    def test_high_tone_ratio_one(self):
        assert hf_energy_ratio(self._single_tone(40), 16) == pytest.approx(1.0, abs=1e-12)

    def test_two_tone_half(self):
        t = np.arange(100)
        x = np.zeros((100, 1, 3))
        x[:, 0, 0] = np.sin(2 * np.pi * 2 * t / 100) + np.sin(2 * np.pi * 40 * t / 100)
        ratio = hf_energy_ratio(VoxelMotion(x, 24.0), 16)
        assert ratio == pytest.approx(0.5, abs=1e-6)

    def test_static_motion_zero_by_convention(self):
        assert hf_energy_ratio(VoxelMotion(np.zeros((10, 2, 3)), 24.0), 4) == 0.0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_ratio_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(24, 3, 3))
        x[0] = 0
        r = hf_energy_ratio(VoxelMotion(x, 24.0), 8)
        assert 0.0 <= r <= 1.0


class TestLss:
    def test_constant_spectrum_is_zero(self, breezy_motion):
        _, grid = breezy_motion
        coef = np.tile((1 + 2j) * np.ones((1, 16, 3)), (grid.voxel_count, 1, 1))
        spec = SparseVoxelSpectrum(coef, 100, 24.0, grid)
        assert lss_metric(spec) == 0.0

    def test_two_voxel_hand_value(self):
        grid, pts = two_voxel_grid()
        assert grid.voxel_count == 2
        coef = np.zeros((2, 16, 3), dtype=complex)
        # real parts differ by a vector of norm 1, imaginary parts equal
        coef[0, 0, 0] = 1.0 + 5j
        coef[1, 0, 0] = 0.0 + 5j
        spec = SparseVoxelSpectrum(coef, 100, 24.0, grid)
        got = lss_metric(spec, positions=pts, cfg=LssConfig(kappa=1, alpha=0.5, lam=0.5))
        assert got == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_translation_invariance_exact_on_integers(self, breezy_motion):
        # integer coordinates + integer shift stay exact in fp, so even
        # distance ties resolve identically
        _, grid = breezy_motion
        rng = np.random.default_rng(5)
        coef = rng.normal(size=(grid.voxel_count, 8, 3)) * (1 + 1j)
        spec = SparseVoxelSpectrum(coef, 100, 24.0, grid)
        pos = rng.integers(0, 50, size=(grid.voxel_count, 3)).astype(float)
        a = lss_metric(spec, pos)
        b = lss_metric(spec, pos + np.array([16.0, -8.0, 4.0]))
        assert a == b

    def test_translation_invariance_tie_free(self, breezy_motion):
        _, grid = breezy_motion
        rng = np.random.default_rng(6)
        coef = rng.normal(size=(grid.voxel_count, 8, 3)) * (1 + 1j)
        spec = SparseVoxelSpectrum(coef, 100, 24.0, grid)
        pos = rng.normal(size=(grid.voxel_count, 3))  # no exact ties
        a = lss_metric(spec, pos)
        b = lss_metric(spec, pos + np.array([13.0, -4.0, 0.5]))
        assert a == pytest.approx(b, rel=1e-9)

    def test_kappa_too_large(self):
        grid, pts = two_voxel_grid()
        coef = np.zeros((2, 4, 3), dtype=complex)
        spec = SparseVoxelSpectrum(coef, 100, 24.0, grid)
        with pytest.raises(DataError):
            lss_metric(spec, pts, LssConfig(kappa=2))

    def test_nonnegative(self, breezy_motion):
        motion, grid = breezy_motion
        spec = fft_compress(voxelize_motion(motion, grid), 16, grid)
        assert lss_metric(spec) >= 0.0

    def test_per_bin_breakdown(self, breezy_motion):
        from spectree.spectrum import lss_per_bin
        motion, grid = breezy_motion
        spec = fft_compress(voxelize_motion(motion, grid), 8, grid)
        per_bin = lss_per_bin(spec)
        assert per_bin.shape == (8,)
        assert np.all(per_bin >= 0)
        # a single-bin spectrum's joint metric equals that bin's entry
        single = spec.with_coefficients(
            np.concatenate([spec.coefficients[:, :1, :],
                            np.zeros_like(spec.coefficients[:, 1:, :])], axis=1))
        assert lss_per_bin(single)[0] == pytest.approx(lss_metric(single), rel=1e-12)


class TestLssGradient:
    def test_matches_central_finite_differences(self):
        from spectree.spectrum import _lss_gradient

        rng = np.random.default_rng(9)
        n, K = 7, 3
        positions = rng.normal(size=(n, 3)) * 4
        coef = rng.normal(size=(n, K, 3)) + 1j * rng.normal(size=(n, K, 3))
        cfg = LssConfig(kappa=3)
        value, grad_re, grad_im = _lss_gradient(coef, positions, cfg)
        assert value > 0

        eps = 1e-7
        for _ in range(12):
            i = int(rng.integers(n))
            j = int(rng.integers(3 * K))
            for part, grad in (("re", grad_re), ("im", grad_im)):
                bump = np.zeros((n, 3 * K))
                bump[i, j] = eps
                bump = bump.reshape(n, K, 3)
                delta = bump if part == "re" else 1j * bump
                up, _, _ = _lss_gradient(coef + delta, positions, cfg)
                down, _, _ = _lss_gradient(coef - delta, positions, cfg)
                fd = (up - down) / (2 * eps)
                assert fd == pytest.approx(grad[i, j], rel=1e-5, abs=1e-8)


class TestSmooth:
    def test_constant_unchanged(self, breezy_motion):
        _, grid = breezy_motion
        coef = np.tile((0.5 - 1j) * np.ones((1, 8, 3)), (grid.voxel_count, 1, 1))
        spec = SparseVoxelSpectrum(coef, 100, 24.0, grid)
        out = smooth_spectrum(spec, steps=5)
        np.testing.assert_array_equal(out.coefficients, spec.coefficients)

    def test_two_voxel_converges_to_agreement(self):
        grid, pts = two_voxel_grid()
        coef = np.zeros((2, 4, 3), dtype=complex)
        coef[0, 1, 0] = 3.0
        coef[1, 1, 0] = 1.0
        spec = SparseVoxelSpectrum(coef, 100, 24.0, grid)
        cfg = LssConfig(kappa=1)
        out = smooth_spectrum(spec, pts, cfg, steps=400, step_size=0.5)
        diff = np.linalg.norm(out.coefficients[0] - out.coefficients[1])
        assert diff < 1e-6

    def test_metric_never_increases(self, breezy_motion):
        motion, grid = breezy_motion
        spec = fft_compress(voxelize_motion(motion, grid), 16, grid)
        cfg = LssConfig()
        pos = grid.voxel_centers()
        values = [lss_metric(spec, pos, cfg)]
        current = spec
        for _ in range(10):
            current = smooth_spectrum(current, pos, cfg, steps=1, step_size=0.05)
            values.append(lss_metric(current, pos, cfg))
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
        assert values[-1] < values[0]  # random spectra strictly improve


class TestFiles:
    def test_motion_roundtrip(self, tmp_path, breezy_motion):
        motion, _ = breezy_motion
        path = tmp_path / "take.motn"
        save_motion(motion, path)
        back = load_motion(path)
        assert back.frame_count == motion.frame_count
        assert back.fps == motion.fps
        np.testing.assert_array_equal(
            back.displacements,
            motion.displacements.astype(np.float32).astype(np.float64))

    def test_spectrum_roundtrip(self, tmp_path, breezy_motion):
        motion, grid = breezy_motion
        spec = fft_compress(voxelize_motion(motion, grid), 16, grid)
        path = tmp_path / "take.svsp"
        save_spectrum(spec, path)
        back = load_spectrum(path)
        assert back.frame_count == spec.frame_count
        assert back.bin_count == spec.bin_count
        assert back.grid.resolution == grid.resolution
        np.testing.assert_array_equal(back.grid.occupied, grid.occupied)
        np.testing.assert_array_equal(back.grid.vertex_to_voxel, grid.vertex_to_voxel)
        np.testing.assert_allclose(back.grid.origin, grid.origin, rtol=0, atol=0)
        f32 = spec.coefficients.astype(np.complex64).astype(np.complex128)
        np.testing.assert_array_equal(back.coefficients, f32)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.svsp"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(DataError):
            load_spectrum(path)
        with pytest.raises(DataError):
            load_motion(path)

    def test_corrupt_rest_frame_rejected(self, tmp_path):
        import struct
        path = tmp_path / "bad.motn"
        frames = np.full((2, 1, 3), 0.5, dtype="<f4")  # nonzero frame 0
        path.write_bytes(b"MOTN" + struct.pack("<IIf", 1, 2, 24.0) + frames.tobytes())
        with pytest.raises(DataError, match="rest frame"):
            load_motion(path)

    def test_truncated_motion_rejected(self, tmp_path):
        import struct
        path = tmp_path / "short.motn"
        path.write_bytes(b"MOTN" + struct.pack("<IIf", 10, 50, 24.0) + b"\x00" * 8)
        with pytest.raises(DataError, match="truncated"):
            load_motion(path)
