"""Contact pose sampling: cone statistics, placement, and depth resolution."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation
from scipy.stats import kstest

from tacalign.contact import (
    ContactPose,
    approach_axis,
    pose_for_depth,
    sample_cone_direction,
    sample_contact_pose_large,
    sample_contact_pose_small,
    sample_surface_point,
)
from tacalign.shapes import Primitive, sdf_eval

from conftest import make_primitive


class TestContactPoseValidation:
    def test_non_unit_quaternion_rejected(self):
        with pytest.raises(ValueError):
            ContactPose(np.array([0.0, 0.0, 0.0, 1.1]), np.zeros(3), 1.0)

    def test_nonpositive_depth_rejected(self):
        with pytest.raises(ValueError):
            ContactPose(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(3), 0.0)


class TestConeSampling:
    def test_degenerate_cone_returns_axis(self):
        rng = np.random.default_rng(0)
        axis = np.array([0.3, -0.5, 0.81])
        axis /= np.linalg.norm(axis)
        v = sample_cone_direction(axis, 0.0, rng)
        assert np.allclose(v, axis, atol=1e-12)

    def test_cone_statistics(self):
        # 10^4 draws: max deviation <= 15 deg and cos(angle) uniform on
        # [cos 15deg, 1] by a KS test
        rng = np.random.default_rng(1)
        axis = np.array([0.0, 0.0, 1.0])
        cos_min = np.cos(np.deg2rad(15.0))
        cosines = np.array(
            [sample_cone_direction(axis, 15.0, rng) @ axis for _ in range(10_000)]
        )
        assert np.all(cosines >= cos_min - 1e-12)
        uniform = (cosines - cos_min) / (1.0 - cos_min)
        assert kstest(uniform, "uniform").pvalue > 0.01


class TestSurfacePointSampling:
    @pytest.mark.parametrize("kind", ["sphere", "cuboid", "torus", "pyramid"])
    def test_point_on_surface_with_unit_normal(self, kind):
        prim = make_primitive(kind)
        rng = np.random.default_rng(2)
        for _ in range(20):
            point, normal = sample_surface_point(prim, rng)
            assert abs(sdf_eval(prim, point)) < 1e-8
            assert np.linalg.norm(normal) == pytest.approx(1.0, abs=1e-6)
            # outward: stepping along the normal leaves the solid
            assert sdf_eval(prim, point + 0.1 * normal) > 0

    def test_sphere_normal_is_radial(self):
        prim = make_primitive("sphere")
        rng = np.random.default_rng(3)
        point, normal = sample_surface_point(prim, rng)
        assert np.allclose(normal, point / np.linalg.norm(point), atol=1e-5)


class TestLargeObjectPoses:
    def test_sphere_approach_within_cone_of_radial(self):
        # for a sphere every surface normal is radial, so the approach axis
        # is a unit vector within 15 deg of some radial direction trivially;
        # the substantive check is that the pressed surface point faces down
        prim = make_primitive("sphere")
        rng = np.random.default_rng(0)
        pose = sample_contact_pose_large(prim, rng)
        axis = approach_axis(pose)
        assert np.linalg.norm(axis) == pytest.approx(1.0, abs=1e-9)
        rot = Rotation.from_quat(pose.rotation)
        assert np.allclose(rot.apply(axis), [0.0, 0.0, -1.0], atol=1e-9)

    def test_depth_range_and_resolution(self):
        prim = make_primitive("cuboid")
        rng = np.random.default_rng(4)
        for _ in range(25):
            pose = sample_contact_pose_large(prim, rng)
            assert 0.2 <= pose.commanded_depth_mm <= 3.5
            low = _lowest_surface_z(prim, pose)
            assert low == pytest.approx(-pose.commanded_depth_mm, abs=1e-6)

    def test_approach_axis_near_local_normal(self):
        # the approach axis deviates from the outward normal at its own
        # contact point by <= 15 deg; probe via the SDF gradient at the
        # posed object's lowest point
        prim = make_primitive("ellipsoid")
        rng = np.random.default_rng(5)
        from tacalign.contact import sdf_gradient, sensor_to_local

        for _ in range(10):
            pose = sample_contact_pose_large(prim, rng)
            axis = approach_axis(pose)
            low_world = _lowest_point(prim, pose)
            local = sensor_to_local(pose, low_world)[0]
            normal = sdf_gradient(prim, local)
            normal /= np.linalg.norm(normal)
            angle = np.rad2deg(np.arccos(np.clip(axis @ normal, -1, 1)))
            # lowest point of the posed solid is the contact point only up
            # to the cone tilt; allow the tilt budget twice
            assert angle <= 31.0


class TestSmallObjectPoses:
    def test_unit_approach_vector(self):
        rng = np.random.default_rng(0)
        pose = sample_contact_pose_small(rng)
        assert np.linalg.norm(approach_axis(pose)) == pytest.approx(1.0, abs=1e-9)

    def test_mean_approach_vanishes(self):
        # law of large numbers over uniform directions
        rng = np.random.default_rng(6)
        axes = np.array(
            [approach_axis(sample_contact_pose_small(rng)) for _ in range(10_000)]
        )
        assert np.linalg.norm(axes.mean(axis=0)) < 0.05

    def test_depth_within_contract(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            pose = sample_contact_pose_small(rng)
            assert 0.2 <= pose.commanded_depth_mm <= 3.5


class TestPoseForDepth:
    def test_sphere_lowest_point(self):
        prim = make_primitive("sphere")
        identity = np.array([0.0, 0.0, 0.0, 1.0])
        pose = pose_for_depth(prim, identity, (1.0, -2.0), 1.25)
        assert pose.translation_mm[2] == pytest.approx(5.0 - 1.25)
        assert _lowest_surface_z(prim, pose) == pytest.approx(-1.25, abs=1e-9)


def _lowest_surface_z(prim, pose) -> float:
    return float(_lowest_point(prim, pose)[0, 2])


def _lowest_point(prim, pose) -> np.ndarray:
    from tacalign.contact import lowest_point_offset

    # the support construction gives min z after translation analytically;
    # verify against a dense sample of the posed surface
    rng = np.random.default_rng(99)
    from conftest import surface_points_by_projection

    pts = surface_points_by_projection(prim, 3000, seed=17)
    world = Rotation.from_quat(pose.rotation).apply(pts) + pose.translation_mm
    low = world[np.argmin(world[:, 2])]
    analytic = lowest_point_offset(prim, pose.rotation) + pose.translation_mm[2]
    assert low[2] >= analytic - 1e-9
    assert low[2] <= analytic + 0.3  # dense-sample slack
    return np.array([[low[0], low[1], analytic]])
