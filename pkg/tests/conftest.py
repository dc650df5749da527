import numpy as np
import pytest

from tacalign.sensor import SensorSpec
from tacalign.shapes import Primitive


@pytest.fixture
def sensor():
    return SensorSpec()


DEFAULT_SHAPE_PARAMS = {
    "sphere": (5.0,),
    "ellipsoid": (6.0, 4.0, 3.0),
    "cuboid": (4.0, 3.0, 2.0),
    "cube": (3.0,),
    "cylinder": (3.0, 4.0),
    "cone": (4.0, 6.0),
    "peak": (3.0, 0.8, 6.0),
    "torus": (5.0, 1.5),
    "triangular-prism": (4.0, 3.0),
    "hexagonal-prism": (3.0, 4.0),
    "pyramid": (4.0, 5.0),
    "wedge": (3.0, 4.0, 5.0),
    "capsule": (2.0, 3.0),
    "cross": (5.0, 1.5, 2.0),
    "ring": (5.0, 3.0, 2.0),
    "dome": (5.0,),
    "edge": (3.0, 5.0, 4.0),
    "corner": (6.0,),
    "flat-plate": (12.0, 9.0, 1.5),
}


def make_primitive(kind, **kwargs):
    return Primitive(kind, DEFAULT_SHAPE_PARAMS[kind], **kwargs)


def surface_points_by_projection(primitive, n, seed=0):
    """Dense surface samples via SDF projection (independent of any one SDF
    formula's interior/exterior split: only the zero level set is used)."""
    from tacalign.shapes import bounding_radius, sdf_eval

    rng = np.random.default_rng(seed)
    radius = bounding_radius(primitive) + 1.0
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = dirs * radius
    for _ in range(80):
        d = sdf_eval(primitive, pts)
        if np.max(np.abs(d)) < 1e-10:
            break
        grads = _grad(primitive, pts)
        norms = np.linalg.norm(grads, axis=1, keepdims=True)
        norms[norms < 1e-9] = 1.0
        pts = pts - d[:, None] * grads / norms
    final = sdf_eval(primitive, pts)
    return pts[np.abs(final) < 1e-8]


def _grad(primitive, pts, h=1e-6):
    from tacalign.shapes import sdf_eval

    grads = np.empty_like(pts)
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = h
        grads[:, axis] = (
            sdf_eval(primitive, pts + offset) - sdf_eval(primitive, pts - offset)
        ) / (2 * h)
    return grads
