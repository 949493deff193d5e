"""Blur kernel construction contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import convolve2d

from deblurlab import psf
from oracles import integer_points_in_disk, rasterize_segment_cells


def support_cells(kernel: psf.Kernel) -> set:
    half = kernel.radius
    return {(int(i) - half, int(j) - half) for i, j in np.argwhere(kernel.values > 0)}


class TestMotionKernel:
    def test_length_one_is_delta(self):
        k = psf.motion_kernel(psf.MotionBlurSpec(1, 0.83), 5)
        assert k.values[2, 2] == 1.0
        assert (k.values > 0).sum() == 1

    def test_axis_aligned_five_taps(self):
        k = psf.motion_kernel(psf.MotionBlurSpec(5, 0.0), 7)
        row = k.values[3]
        assert np.allclose(row[1:6], 0.2)
        assert k.values.sum() == pytest.approx(1.0, abs=1e-12)
        assert (k.values > 0).sum() == 5

    def test_diagonal_matches_rasterizer_oracle(self):
        k = psf.motion_kernel(psf.MotionBlurSpec(5, np.pi / 4), 9)
        expected = rasterize_segment_cells(5, np.pi / 4)
        assert expected == {(-1, 1), (0, 0), (1, -1)}  # (±2, ∓2) exceed the L/2 disk
        assert support_cells(k) == expected
        assert np.allclose(k.values[k.values > 0], 1.0 / len(expected))

    @pytest.mark.parametrize("angle", [0.3, 1.1, np.pi / 2, 2.4])
    def test_oblique_angles_match_oracle(self, angle):
        k = psf.motion_kernel(psf.MotionBlurSpec(6.5, angle), 11)
        assert support_cells(k) == rasterize_segment_cells(6.5, angle)

    def test_support_cardinality_bound(self):
        for length in (1, 2.5, 5, 9.9, 14):
            for angle in np.linspace(0, np.pi, 9):
                k = psf.motion_kernel(psf.MotionBlurSpec(length, angle), 2 * int(length) + 3)
                assert (k.values > 0).sum() <= int(np.ceil(length)) + 1

    def test_size_too_small_raises(self):
        with pytest.raises(psf.KernelError, match="exceed"):
            psf.motion_kernel(psf.MotionBlurSpec(5, 0.0), 5)

    def test_length_below_one_rejected(self):
        with pytest.raises(psf.KernelError, match=">= 1"):
            psf.MotionBlurSpec(0.5, 0.0)


class TestDefocusKernel:
    def test_radius_one(self):
        k = psf.defocus_kernel(psf.DefocusSpec(1), 5)
        assert support_cells(k) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
        assert np.allclose(k.values[k.values > 0], 0.2)

    def test_small_radius_is_delta(self):
        k = psf.defocus_kernel(psf.DefocusSpec(0.4), 3)
        assert k.values[1, 1] == 1.0

    def test_radius_three_cell_count(self):
        k = psf.defocus_kernel(psf.DefocusSpec(3), 9)
        assert (k.values > 0).sum() == 29
        assert support_cells(k) == integer_points_in_disk(3)

    @pytest.mark.parametrize("radius", [0.7, 1.5, 2.0, 3.3, 4.1])
    def test_support_equals_disk_enumeration(self, radius):
        size = 2 * int(np.ceil(radius)) + 3
        k = psf.defocus_kernel(psf.DefocusSpec(radius), size)
        assert support_cells(k) == integer_points_in_disk(radius)

    def test_size_bound(self):
        with pytest.raises(psf.KernelError, match="exceed"):
            psf.defocus_kernel(psf.DefocusSpec(2.5), 5)


class TestShakeKernel:
    def test_straight_horizontal_matches_motion_support(self):
        spec = psf.ShakeSpec(2, 5.0, points=((0.0, -1.0), (0.0, 1.0)))
        shake = psf.shake_kernel(spec, 7)
        motion = psf.motion_kernel(psf.MotionBlurSpec(5, 0.0), 7)
        assert support_cells(shake) == support_cells(motion)

    def test_seed_determinism(self):
        a = psf.shake_kernel(psf.ShakeSpec(4, 7.0, seed=42), 11)
        b = psf.shake_kernel(psf.ShakeSpec(4, 7.0, seed=42), 11)
        assert np.array_equal(a.values, b.values)
        c = psf.shake_kernel(psf.ShakeSpec(4, 7.0, seed=43), 11)
        assert not np.array_equal(a.values, c.values)

    def test_normalization_sweep(self):
        for seed in range(100):
            k = psf.shake_kernel(psf.ShakeSpec(3, 6.0, seed=seed), 11)
            assert k.values.sum() == pytest.approx(1.0, abs=1e-6)
            assert (k.values >= 0).all()

    def test_escaping_trajectory_raises(self):
        spec = psf.ShakeSpec(2, 12.0, points=((0.0, -1.0), (0.0, 1.0)))
        with pytest.raises(psf.KernelError, match="escapes"):
            psf.shake_kernel(spec, 5)

    def test_too_few_control_points(self):
        with pytest.raises(psf.KernelError, match="control points"):
            psf.ShakeSpec(1, 5.0)


class TestCompose:
    def test_delta_is_identity_element(self):
        k = psf.defocus_kernel(psf.DefocusSpec(1.2), 5)
        composed = psf.compose_kernels([psf.delta_kernel(3), k])
        assert composed.size == 7
        pad = (composed.size - k.size) // 2
        assert np.allclose(composed.values[pad:-pad, pad:-pad], k.values, atol=1e-15)

    def test_commutativity(self):
        a = psf.motion_kernel(psf.MotionBlurSpec(4, 0.7), 7)
        b = psf.defocus_kernel(psf.DefocusSpec(1.8), 5)
        ab = psf.compose_kernels([a, b])
        ba = psf.compose_kernels([b, a])
        assert np.abs(ab.values - ba.values).max() < 1e-12

    def test_mass_preserved_before_renormalization(self):
        a = psf.motion_kernel(psf.MotionBlurSpec(5, 1.2), 9)
        b = psf.shake_kernel(psf.ShakeSpec(3, 4.0, seed=2), 7)
        raw = convolve2d(a.values, b.values, mode="full")
        assert raw.sum() == pytest.approx(1.0, abs=1e-9)

    def test_output_size_law(self):
        ks = [psf.delta_kernel(3), psf.delta_kernel(5), psf.delta_kernel(7)]
        assert psf.compose_kernels(ks).size == 3 + 5 + 7 - 2

    def test_empty_list_rejected(self):
        with pytest.raises(psf.KernelError, match="non-empty"):
            psf.compose_kernels([])


class TestKernelInvariants:
    @settings(max_examples=60, deadline=None)
    @given(
        st.sampled_from(["motion", "defocus", "shake"]),
        st.floats(1.0, 12.0),
        st.floats(0.0, np.pi),
        st.integers(0, 10_000),
    )
    def test_every_kernel_normalized_nonnegative(self, family, scale, angle, seed):
        if family == "motion":
            k = psf.motion_kernel(psf.MotionBlurSpec(scale, angle), 2 * int(scale) + 3)
        elif family == "defocus":
            radius = max(scale / 2, 0.3)
            k = psf.defocus_kernel(psf.DefocusSpec(radius), 2 * int(np.ceil(radius)) + 3)
        else:
            k = psf.shake_kernel(psf.ShakeSpec(3, scale, seed=seed), 2 * int(scale) + 3)
        assert k.values.sum() == pytest.approx(1.0, abs=1e-6)
        assert (k.values >= 0).all()
        assert k.size % 2 == 1

    def test_even_size_rejected(self):
        with pytest.raises(psf.KernelError, match="odd"):
            psf.Kernel(np.ones((4, 4)))

    def test_negative_values_rejected(self):
        grid = np.ones((3, 3))
        grid[0, 0] = -0.5
        with pytest.raises(psf.KernelError, match="non-negative"):
            psf.Kernel(grid)


class TestSerialization:
    def test_round_trip_exact(self, tmp_path):
        k = psf.compose_kernels(
            [
                psf.motion_kernel(psf.MotionBlurSpec(5, 0.37), 7),
                psf.defocus_kernel(psf.DefocusSpec(1.4), 5),
            ]
        )
        path = tmp_path / "kernel.txt"
        psf.save_kernel(k, path)
        back = psf.load_kernel(path)
        assert np.array_equal(back.values, k.values)

    def test_header_format(self, tmp_path):
        k = psf.motion_kernel(psf.MotionBlurSpec(3, 0.0), 5)
        path = tmp_path / "kernel.txt"
        psf.save_kernel(k, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "5"
        assert len(lines) == 6
