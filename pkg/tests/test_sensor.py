"""Displacement field, point-cloud sampling, and depth-image rendering."""

import numpy as np
import numpy.testing as npt
import pytest
from scipy import ndimage

from tacalign.contact import pose_for_depth, sensor_to_local
from tacalign.errors import NoContactError
from tacalign.sensor import (
    SensorSpec,
    compute_displacement_field,
    render_depth_image,
    sample_point_cloud,
    texture_modulation,
)
from tacalign.shapes import Primitive, sdf_eval

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])


class TestSensorSpec:
    def test_defaults(self, sensor):
        assert sensor.grid_shape == (200, 150)

    def test_non_integer_grid_rejected(self):
        with pytest.raises(ValueError):
            SensorSpec(width_mm=20.05)

    def test_max_depth_bound(self):
        with pytest.raises(ValueError):
            SensorSpec(max_depth_mm=15.0)


class TestDisplacementField:
    def test_sphere_commanded_depth_at_center(self, sensor):
        prim = Primitive("sphere", (5.0,))
        pose = pose_for_depth(prim, IDENTITY, (0.0, 0.0), 1.0)
        field = compute_displacement_field(prim, pose, sensor)
        ix, iy = np.unravel_index(np.argmax(field), field.shape)
        assert field.max() == pytest.approx(1.0, abs=0.02)
        # peak at the grid centre (cell centres straddle the origin)
        assert ix in (99, 100) and iy in (74, 75)

    def test_flat_plate_uniform(self, sensor):
        prim = Primitive("flat-plate", (12.0, 9.0, 2.0))
        pose = pose_for_depth(prim, IDENTITY, (0.0, 0.0), 0.5)
        field = compute_displacement_field(prim, pose, sensor)
        assert np.mean(np.abs(field - 0.5) <= 0.01) >= 0.99

    def test_sphere_contact_radius_before_smoothing(self, sensor):
        # circle-of-intersection oracle: r_contact = sqrt(r^2 - (r-d)^2),
        # checked by brute-force active-cell count on the raw penetration
        r, d = 5.0, 1.0
        prim = Primitive("sphere", (r,))
        pose = pose_for_depth(prim, IDENTITY, (0.0, 0.0), d)
        xs, ys = sensor.cell_centers()
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([gx, gy, np.zeros_like(gx)], -1).reshape(-1, 3)
        raw = np.maximum(0.0, -sdf_eval(prim, sensor_to_local(pose, pts)))
        raw = np.minimum(raw, d).reshape(gx.shape)
        measured = np.sqrt(np.count_nonzero(raw > 0) * sensor.grid_pitch_mm**2 / np.pi)
        expected = np.sqrt(r**2 - (r - d) ** 2)
        assert measured == pytest.approx(expected, abs=2 * sensor.grid_pitch_mm)

    def test_no_contact_raises(self, sensor):
        prim = Primitive("sphere", (5.0,))
        pose = pose_for_depth(prim, IDENTITY, (0.0, 0.0), 1.0)
        lifted = pose_for_depth(prim, IDENTITY, (0.0, 0.0), 1.0)
        object.__setattr__(lifted, "translation_mm", pose.translation_mm + [0, 0, 10.0])
        with pytest.raises(NoContactError):
            compute_displacement_field(prim, lifted, sensor)

    def test_displacement_bounded_by_command_plus_texture(self, sensor):
        prim = Primitive("sphere", (5.0,), "ridged", 0.25, 1.0)
        pose = pose_for_depth(prim, IDENTITY, (0.0, 0.0), 1.5)
        field = compute_displacement_field(prim, pose, sensor)
        assert field.max() <= 1.5 + 0.25 + 1e-6
        assert field.min() >= 0.0

    def test_smoothing_conserves_sign_and_cap(self, sensor):
        prim = Primitive("cone", (4.0, 6.0), "rough", 0.3, 0.8)
        pose = pose_for_depth(prim, IDENTITY, (2.0, -1.0), 3.4)
        field = compute_displacement_field(prim, pose, sensor)
        assert field.min() >= 0.0
        assert field.max() <= sensor.max_depth_mm

    def test_field_covers_smoothed_raw(self, sensor):
        # independent recomputation of the pipeline: the field equals the
        # max of the Gaussian-smoothed textured penetration and the raw
        # textured penetration, clipped to the pad range
        prim = Primitive("sphere", (5.0,))
        pose = pose_for_depth(prim, IDENTITY, (0.0, 0.0), 1.0)
        field = compute_displacement_field(prim, pose, sensor)

        xs, ys = sensor.cell_centers()
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([gx, gy, np.zeros_like(gx)], -1).reshape(-1, 3)
        raw = np.maximum(0.0, -sdf_eval(prim, sensor_to_local(pose, pts)))
        raw = np.minimum(raw, 1.0).reshape(gx.shape)
        smoothed = ndimage.gaussian_filter(raw, sigma=3.0, mode="nearest")
        expected = np.clip(np.maximum(smoothed, raw), 0.0, sensor.max_depth_mm)
        npt.assert_allclose(field, expected, atol=1e-12)


class TestTextureModulation:
    def test_smooth_is_zero(self):
        prim = Primitive("sphere", (5.0,))
        xy = np.random.default_rng(0).uniform(-5, 5, size=(50, 2))
        assert np.all(texture_modulation(prim, xy) == 0.0)

    @pytest.mark.parametrize("kind", ["ridged", "grooved", "bumpy", "rough"])
    def test_bounded_by_amplitude(self, kind):
        prim = Primitive("sphere", (5.0,), kind, 0.2, 1.0)
        xy = np.random.default_rng(1).uniform(-10, 10, size=(400, 2))
        m = texture_modulation(prim, xy)
        assert np.max(np.abs(m)) <= 0.2 + 1e-12

    def test_rough_deterministic(self):
        prim = Primitive("sphere", (5.0,), "rough", 0.2, 1.0)
        xy = np.random.default_rng(2).uniform(-10, 10, size=(100, 2))
        npt.assert_array_equal(texture_modulation(prim, xy), texture_modulation(prim, xy))


class TestPointCloud:
    @pytest.fixture
    def field(self, sensor):
        prim = Primitive("sphere", (5.0,))
        pose = pose_for_depth(prim, IDENTITY, (0.0, 0.0), 1.0)
        return compute_displacement_field(prim, pose, sensor)

    def test_exact_count(self, field, sensor):
        cloud = sample_point_cloud(field, 1024, np.random.default_rng(0), sensor)
        assert cloud.shape == (1024, 3)

    def test_points_inside_gel_box(self, field, sensor):
        cloud = sample_point_cloud(field, 1024, np.random.default_rng(1), sensor)
        assert np.all(np.abs(cloud[:, 0]) <= 10.0)
        assert np.all(np.abs(cloud[:, 1]) <= 7.5)
        assert np.all((cloud[:, 2] >= 0.0) & (cloud[:, 2] <= 3.5))

    def test_single_active_cell(self, sensor):
        field = np.zeros(sensor.grid_shape)
        field[40, 70] = 0.8
        cloud = sample_point_cloud(field, 64, np.random.default_rng(2), sensor)
        xs, ys = sensor.cell_centers()
        assert np.all(np.abs(cloud[:, 0] - xs[40]) <= 0.05 + 1e-12)
        assert np.all(np.abs(cloud[:, 1] - ys[70]) <= 0.05 + 1e-12)
        assert np.all(cloud[:, 2] == 0.8)

    def test_centroid_matches_grid_centroid(self, field, sensor):
        # exact centroid of the active region as the oracle
        mask = field > 0.05
        xs, ys = sensor.cell_centers()
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        true_centroid = np.array([gx[mask].mean(), gy[mask].mean()])
        centroids = []
        for seed in range(100):
            cloud = sample_point_cloud(field, 1024, np.random.default_rng(seed), sensor)
            centroids.append(cloud[:, :2].mean(axis=0))
        err = np.linalg.norm(np.mean(centroids, axis=0) - true_centroid)
        assert err <= 3 * sensor.grid_pitch_mm

    def test_deterministic(self, field, sensor):
        a = sample_point_cloud(field, 512, np.random.default_rng(7), sensor)
        b = sample_point_cloud(field, 512, np.random.default_rng(7), sensor)
        npt.assert_array_equal(a, b)

    def test_empty_region_raises(self, sensor):
        with pytest.raises(NoContactError):
            sample_point_cloud(np.zeros(sensor.grid_shape), 10,
                               np.random.default_rng(0), sensor)


class TestDepthImage:
    def test_constant_field_invariance(self):
        field = np.full((200, 150), 0.7)
        img = render_depth_image(field, 64, 48)
        npt.assert_allclose(img, 0.7, atol=1e-12)

    def test_identity_dims_bit_exact(self, sensor):
        rng = np.random.default_rng(0)
        field = rng.uniform(0, 3.5, size=sensor.grid_shape)
        img = render_depth_image(field, 200, 150)
        npt.assert_array_equal(img, field.T[::-1])

    def test_sphere_max_preserved(self, sensor):
        # flat enough peak, pressed at an output-pixel centre, so 64x48
        # area-averaging keeps the max within 1e-3 mm of the grid max
        # (oracle: direct max over the grid)
        prim = Primitive("sphere", (20.0,))
        px = sensor.width_mm / 64.0
        pose = pose_for_depth(prim, IDENTITY, (0.5 * px, -0.5 * px), 1.0)
        field = compute_displacement_field(prim, pose, sensor)
        img = render_depth_image(field, 64, 48)
        assert img.max() == pytest.approx(field.max(), abs=1e-3)

    def test_orientation_top_is_positive_y(self, sensor):
        field = np.zeros(sensor.grid_shape)
        field[100, 140] = 1.0  # x ~ 0.05, y ~ +6.55 (top half)
        img = render_depth_image(field, 64, 48)
        r, c = np.unravel_index(np.argmax(img), img.shape)
        assert r < 24  # top rows
        assert 28 <= c <= 36  # middle columns

    def test_small_dims_rejected(self):
        with pytest.raises(ValueError):
            render_depth_image(np.zeros((200, 150)), 4, 48)

    def test_mass_conserved(self):
        # area-weighted averaging preserves the mean exactly
        rng = np.random.default_rng(3)
        field = rng.uniform(0, 2, size=(200, 150))
        img = render_depth_image(field, 64, 48)
        assert img.mean() == pytest.approx(field.mean(), rel=1e-12)
