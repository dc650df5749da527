"""Contact pose sampling against the gel pad.

Poses place a canonical primitive above the gel rest plane (z = 0) so that
its lowest point penetrates by a commanded depth.  Two sampling strategies
are provided: the large-object strategy picks a random surface point and
tilts the approach within a cone around the local outward normal; the
small-object strategy draws the approach direction uniformly from the unit
sphere (normalised 3-Gaussian).  Both add a uniform roll about the press
axis and a uniform in-plane placement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .shapes import Primitive, bounding_radius, sdf_eval, support

APPROACH_CONE_HALF_ANGLE_DEG = 15.0
MIN_COMMANDED_DEPTH_MM = 0.2

#: in-plane placement keeps the press point this far from the gel border (mm)
LATERAL_MARGIN_MM = 2.0


@dataclass(frozen=True)
class ContactPose:
    """Rigid placement of a primitive plus the commanded indentation.

    ``rotation`` is a unit quaternion in (x, y, z, w) order (scipy
    convention); ``translation_mm`` maps canonical-frame points into the
    sensor frame as ``R @ p + t``.
    """

    rotation: np.ndarray
    translation_mm: np.ndarray
    commanded_depth_mm: float

    def __post_init__(self) -> None:
        q = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation_mm, dtype=float)
        if q.shape != (4,):
            raise ValueError("rotation must be a quaternion of shape (4,)")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("rotation quaternion must be unit-norm within 1e-9")
        if t.shape != (3,):
            raise ValueError("translation_mm must be a 3-vector")
        if self.commanded_depth_mm <= 0.0:
            raise ValueError("commanded_depth_mm must be positive")
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation_mm", t)

    def matrix(self) -> np.ndarray:
        return Rotation.from_quat(self.rotation).as_matrix()


def approach_axis(pose: ContactPose) -> np.ndarray:
    """Canonical-frame direction that points straight down after posing.

    This is the axis along which the object was pressed: R @ axis = -z.
    """
    return Rotation.from_quat(pose.rotation).inv().apply([0.0, 0.0, -1.0])


def posed_sdf(primitive: Primitive, pose: ContactPose, points: np.ndarray) -> np.ndarray:
    """Signed distance from sensor-frame *points* to the posed primitive."""
    rot = Rotation.from_quat(pose.rotation)
    local = rot.inv().apply(np.atleast_2d(np.asarray(points, dtype=float)) - pose.translation_mm)
    d = sdf_eval(primitive, local)
    return d[0] if np.asarray(points).ndim == 1 else d


def sensor_to_local(pose: ContactPose, points: np.ndarray) -> np.ndarray:
    """Map sensor-frame points into the primitive's canonical frame."""
    rot = Rotation.from_quat(pose.rotation)
    return rot.inv().apply(np.atleast_2d(np.asarray(points, dtype=float)) - pose.translation_mm)


def lowest_point_offset(primitive: Primitive, rotation: np.ndarray) -> float:
    """min z over the rotated solid (translation zero), via the support function."""
    down_local = Rotation.from_quat(rotation).inv().apply([0.0, 0.0, -1.0])
    return -support(primitive, down_local)


def pose_for_depth(
    primitive: Primitive,
    rotation: np.ndarray,
    xy_mm: tuple[float, float],
    depth_mm: float,
) -> ContactPose:
    """Build the pose whose lowest point sits ``depth_mm`` below the rest plane."""
    tz = -depth_mm - lowest_point_offset(primitive, rotation)
    t = np.array([xy_mm[0], xy_mm[1], tz], dtype=float)
    return ContactPose(np.asarray(rotation, dtype=float), t, float(depth_mm))


# ---------------------------------------------------------------------------
# Random direction / rotation construction
# ---------------------------------------------------------------------------

def sample_unit_vector(rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on S^2 via the normalised 3-Gaussian construction."""
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def sample_cone_direction(
    axis: np.ndarray, half_angle_deg: float, rng: np.random.Generator
) -> np.ndarray:
    """Uniform direction within the cone of *half_angle_deg* around *axis*.

    cos(angle to axis) is uniform on [cos(half_angle), 1], which is the
    area-uniform density on the spherical cap.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    cos_min = np.cos(np.deg2rad(half_angle_deg))
    c = rng.uniform(cos_min, 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    s = np.sqrt(max(0.0, 1.0 - c * c))
    # orthonormal frame around the axis
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    w = np.cross(axis, u)
    return c * axis + s * (np.cos(phi) * u + np.sin(phi) * w)


def rotation_aligning(v_from: np.ndarray, v_to: np.ndarray) -> Rotation:
    """Minimal rotation taking unit vector *v_from* onto unit vector *v_to*."""
    a = np.asarray(v_from, dtype=float)
    b = np.asarray(v_to, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    c = float(np.dot(a, b))
    if c > 1.0 - 1e-12:
        return Rotation.identity()
    if c < -1.0 + 1e-12:
        # antipodal: rotate pi about any axis orthogonal to a
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(a, helper)
        axis /= np.linalg.norm(axis)
        return Rotation.from_rotvec(np.pi * axis)
    axis = np.cross(a, b)
    angle = np.arctan2(np.linalg.norm(axis), c)
    return Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle)


def _press_rotation(
    approach_local: np.ndarray, roll: float
) -> np.ndarray:
    """Quaternion rotating the canonical frame so *approach_local* maps to -z."""
    base = rotation_aligning(approach_local, np.array([0.0, 0.0, -1.0]))
    rot = Rotation.from_rotvec([0.0, 0.0, roll]) * base
    q = rot.as_quat()
    return q / np.linalg.norm(q)


# ---------------------------------------------------------------------------
# Surface point sampling (SDF projection)
# ---------------------------------------------------------------------------

def sdf_gradient(primitive: Primitive, point: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the signed distance (unit for exact SDFs)."""
    p = np.asarray(point, dtype=float)
    offsets = np.eye(3) * h
    plus = sdf_eval(primitive, p + offsets)
    minus = sdf_eval(primitive, p - offsets)
    return (plus - minus) / (2.0 * h)


def sample_surface_point(
    primitive: Primitive, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Random surface point and its outward normal, by SDF projection.

    A ray direction is drawn uniformly; the point starts on the bounding
    sphere and walks the distance field until |sdf| < 1e-9.  Not an
    area-uniform surface density, but adequate for contact diversity.
    """
    radius = bounding_radius(primitive) + 1.0
    for _ in range(64):
        p = sample_unit_vector(rng) * radius
        for _ in range(200):
            d = sdf_eval(primitive, p)
            if abs(d) < 1e-9:
                break
            g = sdf_gradient(primitive, p)
            gn = np.linalg.norm(g)
            if gn < 1e-8:
                break
            p = p - d * g / gn
        else:
            continue
        if abs(sdf_eval(primitive, p)) < 1e-9:
            normal = sdf_gradient(primitive, p)
            n = np.linalg.norm(normal)
            if n > 1e-8:
                return p, normal / n
    raise RuntimeError("surface projection failed to converge")  # pragma: no cover


# ---------------------------------------------------------------------------
# Pose samplers
# ---------------------------------------------------------------------------

def _sample_lateral(rng: np.random.Generator, width_mm: float, height_mm: float):
    """Press centre: one of the nine position cells, jittered within it.

    Cell-anchored placement covers every position class while keeping the
    press centre away from cell boundaries, so deepest-point labels stay
    unambiguous under tilt.
    """
    cx = width_mm / 3.0 * (rng.integers(3) - 1)
    cy = height_mm / 3.0 * (rng.integers(3) - 1)
    jx = rng.uniform(-1.2, 1.2)
    jy = rng.uniform(-1.2, 1.2)
    return cx + jx, cy + jy


def sample_contact_pose_large(
    primitive: Primitive,
    rng: np.random.Generator,
    max_depth_mm: float = 3.5,
    width_mm: float = 20.0,
    height_mm: float = 15.0,
    cone_half_angle_deg: float = APPROACH_CONE_HALF_ANGLE_DEG,
    roll_range_rad: float = 0.0,
) -> ContactPose:
    """Surface-point contact: approach within a cone about the local normal.

    The residual roll about the press axis is zero by default (the minimal
    aligning rotation), keeping patches in a canonical in-plane attitude;
    pass ``roll_range_rad`` to randomise it.
    """
    _, normal = sample_surface_point(primitive, rng)
    approach = sample_cone_direction(normal, cone_half_angle_deg, rng)
    roll = rng.uniform(-roll_range_rad, roll_range_rad) if roll_range_rad else 0.0
    q = _press_rotation(approach, roll)
    depth = rng.uniform(MIN_COMMANDED_DEPTH_MM, max_depth_mm)
    xy = _sample_lateral(rng, width_mm, height_mm)
    return pose_for_depth(primitive, q, xy, depth)


def sample_contact_pose_small(
    rng: np.random.Generator,
    primitive: Primitive | None = None,
    max_depth_mm: float = 3.5,
    width_mm: float = 20.0,
    height_mm: float = 15.0,
    roll_range_rad: float = 0.0,
) -> ContactPose:
    """Free-orientation contact: approach direction uniform on the sphere.

    When *primitive* is given the pose translation is resolved so the lowest
    point penetrates by the sampled depth; otherwise translation is left at
    the origin in x, y with z unresolved (0).
    """
    approach = sample_unit_vector(rng)
    roll = rng.uniform(-roll_range_rad, roll_range_rad) if roll_range_rad else 0.0
    q = _press_rotation(approach, roll)
    depth = rng.uniform(MIN_COMMANDED_DEPTH_MM, max_depth_mm)
    xy = _sample_lateral(rng, width_mm, height_mm)
    if primitive is None:
        return ContactPose(q, np.array([xy[0], xy[1], 0.0]), depth)
    return pose_for_depth(primitive, q, xy, depth)
