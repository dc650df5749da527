"""Signed-distance primitives: exactness, metric property, equivariance."""

import numpy as np
import numpy.testing as npt
import pytest
from scipy.spatial.transform import Rotation

from tacalign.errors import UnsupportedShapeError
from tacalign.shapes import (
    SHAPE_KINDS,
    Primitive,
    bounding_radius,
    sdf_eval,
    support,
)

from conftest import DEFAULT_SHAPE_PARAMS, make_primitive, surface_points_by_projection


class TestPrimitiveValidation:
    def test_unknown_shape_rejected(self):
        with pytest.raises(UnsupportedShapeError):
            Primitive("blob", (1.0,))

    def test_nonpositive_size_rejected(self):
        with pytest.raises(ValueError):
            Primitive("sphere", (0.0,))

    def test_wrong_param_count_rejected(self):
        with pytest.raises(ValueError):
            Primitive("sphere", (1.0, 2.0))

    def test_texture_amplitude_cap(self):
        with pytest.raises(ValueError):
            Primitive("sphere", (5.0,), "ridged", 0.31, 1.0)

    def test_texture_wavelength_floor(self):
        with pytest.raises(ValueError):
            Primitive("sphere", (5.0,), "ridged", 0.1, 0.4)


class TestSphere:
    def test_center(self):
        assert sdf_eval(make_primitive("sphere"), [0.0, 0.0, 0.0]) == -5.0

    def test_on_surface(self):
        assert sdf_eval(make_primitive("sphere"), [0.0, 0.0, 5.0]) == 0.0

    def test_outside(self):
        npt.assert_allclose(sdf_eval(make_primitive("sphere"), [8.0, 0.0, 0.0]), 3.0)


class TestCuboid:
    def test_face_distance_against_dense_surface_oracle(self):
        # independent oracle: nearest surface point over a dense sample
        prim = Primitive("cuboid", (1.0, 2.0, 3.0))
        rng = np.random.default_rng(0)
        n = 100
        grid = np.linspace(-1.0, 1.0, n)
        faces = []
        for s in (-1.0, 1.0):
            u, v = np.meshgrid(grid, grid)
            faces.append(np.stack([np.full(u.size, s * 1.0), 2.0 * u.ravel(), 3.0 * v.ravel()], -1))
            faces.append(np.stack([1.0 * u.ravel(), np.full(u.size, s * 2.0), 3.0 * v.ravel()], -1))
            faces.append(np.stack([1.0 * u.ravel(), 2.0 * v.ravel(), np.full(u.size, s * 3.0)], -1))
        surface = np.vstack(faces)
        assert surface.shape[0] == 6 * n * n  # 60k dense surface samples
        query = np.array([2.0, 0.0, 0.0])
        brute = np.min(np.linalg.norm(surface - query, axis=1))
        value = sdf_eval(prim, query)
        assert value == pytest.approx(1.0, abs=1e-12)
        assert value == pytest.approx(brute, abs=1e-3)


class TestEllipsoid:
    def test_on_axis_points(self):
        prim = Primitive("ellipsoid", (3.0, 4.0, 5.0))
        npt.assert_allclose(sdf_eval(prim, [3.0, 0.0, 0.0]), 0.0, atol=1e-9)
        npt.assert_allclose(sdf_eval(prim, [0.0, 0.0, 6.0]), 1.0, atol=1e-9)

    def test_center_depth_is_min_semi_axis(self):
        prim = Primitive("ellipsoid", (3.0, 4.0, 5.0))
        npt.assert_allclose(sdf_eval(prim, [0.0, 0.0, 0.0]), -3.0, atol=1e-6)

    def test_against_projection_oracle(self):
        # the sampled-surface oracle can only overestimate the distance, by
        # at most its own point spacing
        prim = Primitive("ellipsoid", (6.0, 4.0, 3.0))
        surface = surface_points_by_projection(prim, 20_000, seed=1)
        rng = np.random.default_rng(2)
        queries = rng.uniform(-8, 8, size=(50, 3))
        d = sdf_eval(prim, queries)
        for q, dq in zip(queries, d):
            brute = np.min(np.linalg.norm(surface - q, axis=1))
            assert abs(dq) <= brute + 1e-9
            assert brute - abs(dq) < 0.05


@pytest.mark.parametrize("kind", SHAPE_KINDS)
class TestAllShapes:
    def test_zero_on_projected_surface(self, kind):
        prim = make_primitive(kind)
        pts = surface_points_by_projection(prim, 500, seed=3)
        assert len(pts) > 300  # projection converges for most rays
        npt.assert_allclose(sdf_eval(prim, pts), 0.0, atol=1e-7)

    def test_metric_property(self, kind):
        # |sdf(p) - sdf(q)| <= |p - q| on 10^4 random pairs
        prim = make_primitive(kind)
        rng = np.random.default_rng(11)
        radius = 1.3 * bounding_radius(prim)
        p = rng.uniform(-radius, radius, size=(10_000, 3))
        q = rng.uniform(-radius, radius, size=(10_000, 3))
        lhs = np.abs(sdf_eval(prim, p) - sdf_eval(prim, q))
        rhs = np.linalg.norm(p - q, axis=1)
        assert np.all(lhs <= rhs + 1e-9)

    def test_rotation_equivariance(self, kind):
        # rotating the query frame along with the primitive changes nothing:
        # sdf of the rotated primitive at R p equals sdf of the canonical
        # primitive at p, evaluated here through the local-frame transform
        prim = make_primitive(kind)
        rng = np.random.default_rng(5)
        rot = Rotation.from_rotvec(rng.normal(size=3))
        pts = rng.uniform(-8, 8, size=(200, 3))
        direct = sdf_eval(prim, pts)
        via_rotation = sdf_eval(prim, rot.inv().apply(rot.apply(pts)))
        npt.assert_allclose(direct, via_rotation, atol=1e-9)

    def test_far_point_positive(self, kind):
        prim = make_primitive(kind)
        radius = bounding_radius(prim)
        assert sdf_eval(prim, [0.0, 0.0, 2.0 * radius]) > 0

    def test_support_dominates_surface(self, kind):
        # support function is the max of <x, d> over the solid
        prim = make_primitive(kind)
        pts = surface_points_by_projection(prim, 800, seed=7)
        rng = np.random.default_rng(8)
        for _ in range(20):
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            h = support(prim, d)
            projections = pts @ d
            assert projections.max() <= h + 1e-6
            # the bound is attained somewhere on the surface
            assert projections.max() >= h - 0.25

    def test_support_matches_lowest_point(self, kind):
        # min z over the solid == -support(-e_z)
        prim = make_primitive(kind)
        pts = surface_points_by_projection(prim, 800, seed=9)
        assert pts[:, 2].min() == pytest.approx(-support(prim, [0, 0, -1.0]), abs=0.25)


class TestBatchShapes:
    def test_batched_equals_scalar(self):
        prim = make_primitive("torus")
        rng = np.random.default_rng(0)
        pts = rng.uniform(-7, 7, size=(64, 3))
        batched = sdf_eval(prim, pts)
        scalar = np.array([sdf_eval(prim, p) for p in pts])
        npt.assert_array_equal(batched, scalar)

    def test_leading_dims_preserved(self):
        prim = make_primitive("cube")
        pts = np.zeros((4, 5, 3))
        assert sdf_eval(prim, pts).shape == (4, 5)
