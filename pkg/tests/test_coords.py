"""
Coordinates, Fourier features and rays
Run: pytest tests/test_coords.py -v
"""
import math
import os
import sys
import warnings

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from locality_inr import coords
from locality_inr import tensor_core as tc
from locality_inr.errors import BandwidthOrderWarning, ConfigError, ContractError, DimensionError


# ─────────────────────────────────────────────────────────────────────────────
# GRIDS
# ─────────────────────────────────────────────────────────────────────────────

class TestGridCoords:

    def test_single_pixel_is_origin(self):
        np.testing.assert_allclose(coords.grid_coords(1, 1), [[0.0, 0.0]])

    def test_two_by_two_row_major(self):
        expected = [[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]]
        np.testing.assert_allclose(coords.grid_coords(2, 2), expected)

    def test_three_by_one_y_values(self):
        grid = coords.grid_coords(3, 1)
        np.testing.assert_allclose(grid[:, 0], [-2 / 3, 0.0, 2 / 3])
        np.testing.assert_allclose(grid[:, 1], [0.0, 0.0, 0.0])

    def test_unit_range(self):
        grid = coords.grid_coords(2, 4, coord_range='unit')
        assert grid.min() > 0 and grid.max() < 1
        np.testing.assert_allclose(np.unique(grid[:, 1]), [0.125, 0.375, 0.625, 0.875])

    def test_points_are_symmetric(self):
        grid = coords.grid_coords(5, 7)
        np.testing.assert_allclose(grid.mean(axis=0), [0.0, 0.0], atol=1e-12)

    def test_zero_dimension_rejected(self):
        with pytest.raises(ContractError):
            coords.grid_coords(0, 4)

    def test_unknown_range_rejected(self):
        with pytest.raises(ConfigError):
            coords.grid_coords(2, 2, coord_range='pixels')


# ─────────────────────────────────────────────────────────────────────────────
# FOURIER FEATURES
# ─────────────────────────────────────────────────────────────────────────────

class TestFourierFeatures:

    def test_zero_coordinate(self):
        gamma = coords.fourier_features(np.zeros((1, 2)), sigma=8.0, d_F=12)
        np.testing.assert_allclose(gamma[0, 0::2], np.ones(6))
        np.testing.assert_allclose(gamma[0, 1::2], np.zeros(6))

    def test_hand_evaluated_layout(self):
        gamma = coords.fourier_features(np.array([[1.0]]), sigma=4.0, d_F=4)
        np.testing.assert_allclose(gamma[0], [-1.0, 0.0, 1.0, 0.0], atol=1e-12)

    def test_axis_major_layout(self):
        v = np.array([[0.25, 0.0]])
        gamma = coords.fourier_features(v, sigma=4.0, d_F=8)
        # second axis is zero: its block is [1, 0, 1, 0]
        np.testing.assert_allclose(gamma[0, 4:], [1.0, 0.0, 1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(gamma[0, :2], [math.cos(math.pi / 4), math.sin(math.pi / 4)])

    def test_ladder_sixteen(self):
        np.testing.assert_allclose(coords.fourier_frequencies(16.0, 5), [1, 2, 4, 8, 16])

    def test_ladder_endpoints_and_log_spacing(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            sigma = float(rng.uniform(1.5, 512.0))
            n = int(rng.integers(2, 64))
            omega = coords.fourier_frequencies(sigma, n)
            assert omega[0] == 1.0
            assert omega[-1] == sigma
            steps = np.diff(np.log(omega))
            assert np.max(np.abs(steps - math.log(sigma) / (n - 1))) < 1e-9

    def test_indivisible_width_is_config_error(self):
        with pytest.raises(ConfigError, match="d_F"):
            coords.fourier_features(np.zeros((1, 2)), sigma=4.0, d_F=6)

    def test_single_frequency_rejected(self):
        with pytest.raises(ConfigError):
            coords.n_frequencies(4, 2)

    def test_sigma_must_exceed_one(self):
        with pytest.raises(ConfigError):
            coords.fourier_features(np.zeros((1, 1)), sigma=1.0, d_F=4)

    def test_output_shape_keeps_leading_axes(self):
        gamma = coords.fourier_features(np.zeros((3, 5, 6)), sigma=2.0, d_F=24)
        assert gamma.shape == (3, 5, 24)


class TestFrequencyFeatures:

    def setup_method(self):
        self.v = np.array([[0.3], [-0.7]])

    def test_zero_parameters(self):
        out = coords.frequency_features(self.v, 4.0, tc.Tensor(np.zeros((4, 2))), tc.Tensor(np.zeros(2)))
        np.testing.assert_array_equal(out.data, np.zeros((2, 2)))

    def test_relu_cutoff_on_bias(self):
        out = coords.frequency_features(self.v, 4.0, tc.Tensor(np.zeros((4, 2))), tc.Tensor([1.0, -1.0]))
        np.testing.assert_allclose(out.data, [[1.0, 0.0], [1.0, 0.0]])

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        W = tc.Tensor(rng.normal(size=(4, 8)))
        b = tc.Tensor(rng.normal(size=8))
        out = coords.frequency_features(rng.uniform(-1, 1, size=(50, 1)), 4.0, W, b)
        assert np.all(out.data >= 0)

    def test_bias_shape_mismatch(self):
        with pytest.raises(DimensionError):
            coords.frequency_features(self.v, 4.0, tc.Tensor(np.zeros((4, 2))), tc.Tensor(np.zeros(3)))


class TestBandwidthValidation:

    def test_ordered_bandwidths_do_not_warn(self):
        with warnings.catch_warnings():
            warnings.simplefilter('error')
            coords.validate_bandwidths(coords.BandwidthSpec(16.0, (128.0, 32.0), 256), d_in=2)

    def test_reversed_bandwidths_warn(self):
        with pytest.warns(BandwidthOrderWarning):
            coords.validate_bandwidths(coords.BandwidthSpec(32.0, (4.0, 8.0), 16), d_in=2)

    def test_sigma_at_most_one_rejected(self):
        with pytest.raises(ConfigError, match=r"sigma_levels\[1\]"):
            coords.validate_bandwidths(coords.BandwidthSpec(2.0, (8.0, 1.0), 16), d_in=2)


# ─────────────────────────────────────────────────────────────────────────────
# RAYS
# ─────────────────────────────────────────────────────────────────────────────

class TestPlucker:

    def test_ray_through_origin(self):
        np.testing.assert_allclose(coords.plucker_ray((0, 0, 0), (0, 0, 2)), [0, 0, 1, 0, 0, 0])

    def test_hand_cross_product(self):
        np.testing.assert_allclose(coords.plucker_ray((1, 0, 0), (0, 0, 1)), [0, 0, 1, 0, -1, 0])

    def test_zero_direction_rejected(self):
        with pytest.raises(ContractError):
            coords.plucker_ray((1, 2, 3), (0, 0, 0))

    def test_moment_independent_of_origin_along_ray(self):
        d = np.array([0.3, -0.2, 0.9])
        o = np.array([0.5, 1.0, -2.0])
        np.testing.assert_allclose(coords.plucker_ray(o, d), coords.plucker_ray(o + 2.5 * d, d), atol=1e-12)


class TestRayBundle:

    def setup_method(self):
        self.intrinsics = coords.CameraIntrinsics.from_fov(40.0, 4, 6)

    def test_identity_pose_principal_pixel(self):
        intrinsics = coords.CameraIntrinsics(fx=1.0, fy=1.0, cx=0.5, cy=0.5)
        rays = coords.ray_bundle(np.eye(4), intrinsics, 1, 1)
        np.testing.assert_allclose(rays, [[0, 0, 1, 0, 0, 0]], atol=1e-12)

    def test_matches_pinhole_oracle(self):
        pose = coords.look_at_pose((0.5, -1.0, -3.0))
        rays = coords.ray_bundle(pose, self.intrinsics, 4, 6)
        assert rays.shape == (24, 6)
        k = self.intrinsics
        row, col = 2, 5
        d_cam = np.array([(col + 0.5 - k.cx) / k.fx, (row + 0.5 - k.cy) / k.fy, 1.0])
        d_world = pose[:3, :3] @ d_cam
        d_world /= np.linalg.norm(d_world)
        expected = np.concatenate([d_world, np.cross(pose[:3, 3], d_world)])
        np.testing.assert_allclose(rays[row * 6 + col], expected, atol=1e-12)

    def test_directions_are_unit(self):
        rays = coords.ray_bundle(coords.look_at_pose((2.0, 1.0, 2.0)), self.intrinsics, 4, 6)
        np.testing.assert_allclose(np.linalg.norm(rays[:, :3], axis=1), np.ones(24))

    def test_look_at_center_ray_hits_target(self):
        pose = coords.look_at_pose((0.0, 0.0, -3.0))
        intrinsics = coords.CameraIntrinsics.from_fov(40.0, 1, 1)
        origins, dirs = coords.camera_rays(pose, intrinsics, 1, 1)
        np.testing.assert_allclose(dirs[0], [0.0, 0.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(origins[0], [0.0, 0.0, -3.0])

    def test_three_by_four_pose_accepted(self):
        pose = coords.look_at_pose((1.0, 0.0, -2.0))
        np.testing.assert_allclose(coords.ray_bundle(pose[:3], self.intrinsics, 4, 6),
                                   coords.ray_bundle(pose, self.intrinsics, 4, 6))

    def test_degenerate_pose_rejected(self):
        pose = np.eye(4)
        pose[0, 0] = 2.0
        with pytest.raises(ContractError, match="orthonormal"):
            coords.ray_bundle(pose, self.intrinsics, 4, 6)

    def test_reflection_rejected(self):
        pose = np.diag([1.0, 1.0, -1.0, 1.0])
        with pytest.raises(ContractError):
            coords.validate_pose(pose)

    def test_malformed_pose_rejected(self):
        with pytest.raises(ContractError):
            coords.validate_pose(np.eye(3))
        bad = np.eye(4)
        bad[0, 3] = np.nan
        with pytest.raises(ContractError):
            coords.validate_pose(bad)

    def test_scaled_intrinsics(self):
        half = self.intrinsics.scaled(2, 3, 4, 6)
        assert half.fx == pytest.approx(self.intrinsics.fx / 2)
        assert half.cx == pytest.approx(1.5)
        assert half.cy == pytest.approx(1.0)
