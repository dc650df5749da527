"""Gel-pad deformation model: displacement fields, point clouds, depth images.

The gel rest surface is the z = 0 plane over a ``width x height`` rectangle
centred at the origin; indentation d(x, y) >= 0 is measured downward in mm.
A posed primitive indents the pad by the Euclidean penetration depth
``max(0, -sdf)`` sampled at the rest-plane grid, capped by the commanded
depth.  Texture modulation is added inside the contact patch in the
object's local frame, the result is smoothed with a Gaussian kernel, and
the smoothed field is composed with the raw (textured) penetration by an
elementwise maximum so the gel never sits above the indenting surface.

Grid layout: ``grid[ix, iy]`` with cell centres
``x = -W/2 + (ix + 0.5) * pitch`` and ``y = -H/2 + (iy + 0.5) * pitch``.
Depth images are row-major ``(h, w)`` with row 0 at the top (+y).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .contact import ContactPose, sensor_to_local
from .errors import NoContactError
from .shapes import Primitive

#: cells with indentation above this are "in contact" (mm)
CONTACT_EPSILON_MM = 0.05


@dataclass(frozen=True)
class SensorSpec:
    """Gel pad geometry and smoothing parameters (GelSight-like defaults)."""

    width_mm: float = 20.0
    height_mm: float = 15.0
    max_depth_mm: float = 3.5
    grid_pitch_mm: float = 0.1
    smoothing_sigma_mm: float = 0.3

    def __post_init__(self) -> None:
        for name in ("width_mm", "height_mm", "max_depth_mm", "grid_pitch_mm",
                     "smoothing_sigma_mm"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.max_depth_mm >= min(self.width_mm, self.height_mm):
            raise ValueError("max_depth_mm must be smaller than the pad extents")
        for extent in (self.width_mm, self.height_mm):
            ratio = extent / self.grid_pitch_mm
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError("pad extents must be integer multiples of the pitch")

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (
            int(round(self.width_mm / self.grid_pitch_mm)),
            int(round(self.height_mm / self.grid_pitch_mm)),
        )

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.grid_shape
        xs = -0.5 * self.width_mm + (np.arange(nx) + 0.5) * self.grid_pitch_mm
        ys = -0.5 * self.height_mm + (np.arange(ny) + 0.5) * self.grid_pitch_mm
        return xs, ys


# ---------------------------------------------------------------------------
# Texture modulation
# ---------------------------------------------------------------------------

def _texture_seed(primitive: Primitive) -> int:
    key = f"{primitive.texture_amplitude_mm:.6f}|{primitive.texture_wavelength_mm:.6f}"
    return zlib.crc32(key.encode("ascii"))


def texture_modulation(primitive: Primitive, local_xy: np.ndarray) -> np.ndarray:
    """Height modulation in [-amp, +amp], evaluated at object-local (u, v)."""
    amp = primitive.texture_amplitude_mm
    if primitive.texture_kind == "smooth" or amp == 0.0:
        return np.zeros(local_xy.shape[:-1])
    wl = primitive.texture_wavelength_mm
    u = local_xy[..., 0]
    v = local_xy[..., 1]
    k = 2.0 * np.pi / wl
    if primitive.texture_kind == "ridged":
        return amp * np.sin(k * u)
    if primitive.texture_kind == "grooved":
        return amp * np.sign(np.sin(k * u))
    if primitive.texture_kind == "bumpy":
        return amp * np.sin(k * u) * np.sin(k * v)
    # rough: band-limited mixture of plane waves with seeded phases
    rng = np.random.default_rng(_texture_seed(primitive))
    total = np.zeros(u.shape)
    n_waves = 8
    for _ in range(n_waves):
        ang = rng.uniform(0.0, 2.0 * np.pi)
        freq = k * rng.uniform(0.7, 1.4)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        total += np.sin(freq * (np.cos(ang) * u + np.sin(ang) * v) + phase)
    peak = np.max(np.abs(total))
    if peak < 1e-12:
        return np.zeros(u.shape)
    return amp * total / peak


# ---------------------------------------------------------------------------
# Displacement field
# ---------------------------------------------------------------------------

def compute_displacement_field(
    primitive: Primitive, pose: ContactPose, sensor: SensorSpec
) -> np.ndarray:
    """Indentation grid (nx, ny) in mm for a posed primitive.

    Raises :class:`NoContactError` when the primitive does not reach the pad.
    """
    xs, ys = sensor.cell_centers()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    surface = np.stack([gx, gy, np.zeros_like(gx)], axis=-1)

    local = sensor_to_local(pose, surface.reshape(-1, 3))
    sdf = _eval_sdf_flat(primitive, local).reshape(gx.shape)
    raw = np.minimum(np.maximum(0.0, -sdf), pose.commanded_depth_mm)

    contact = raw > 0.0
    if not np.any(contact):
        raise NoContactError("primitive does not touch the gel surface")

    tex = texture_modulation(primitive, local[:, :2].reshape(gx.shape + (2,)))
    textured = np.clip(raw + np.where(contact, tex, 0.0), 0.0, sensor.max_depth_mm)

    sigma_cells = sensor.smoothing_sigma_mm / sensor.grid_pitch_mm
    smoothed = ndimage.gaussian_filter(textured, sigma=sigma_cells, mode="nearest")

    # The gel conforms to the indenter: it can sag around the contact
    # (smoothing) but never sit above the pressed surface itself.
    field = np.clip(np.maximum(smoothed, textured), 0.0, sensor.max_depth_mm)
    return field


def _eval_sdf_flat(primitive: Primitive, points: np.ndarray) -> np.ndarray:
    from .shapes import sdf_eval

    return sdf_eval(primitive, points)


def contact_mask(field: np.ndarray, eps: float = CONTACT_EPSILON_MM) -> np.ndarray:
    return field > eps


# ---------------------------------------------------------------------------
# Point cloud sampling
# ---------------------------------------------------------------------------

DEFAULT_POINT_COUNT = 1024


def sample_point_cloud(
    field: np.ndarray,
    n: int,
    rng: np.random.Generator,
    sensor: SensorSpec,
) -> np.ndarray:
    """Sample *n* points (x, y, z) from the contact patch of *field*.

    Cells with d > 0.05 mm are drawn uniformly (without replacement when the
    patch has at least *n* cells, with replacement otherwise); each point is
    the cell centre plus uniform in-cell jitter of +-pitch/2 in x and y, and
    z is the cell's indentation depth.
    """
    if n <= 0:
        raise ValueError("point count must be positive")
    active = np.argwhere(contact_mask(field))
    if active.shape[0] == 0:
        raise NoContactError("no cells above the contact threshold")

    replace = active.shape[0] < n
    choice = rng.choice(active.shape[0], size=n, replace=replace)
    cells = active[choice]

    xs, ys = sensor.cell_centers()
    half = 0.5 * sensor.grid_pitch_mm
    jitter = rng.uniform(-half, half, size=(n, 2))
    x = xs[cells[:, 0]] + jitter[:, 0]
    y = ys[cells[:, 1]] + jitter[:, 1]
    z = field[cells[:, 0], cells[:, 1]]
    return np.stack([x, y, z], axis=-1)


# ---------------------------------------------------------------------------
# Depth image rendering
# ---------------------------------------------------------------------------

DEFAULT_IMAGE_WIDTH = 64
DEFAULT_IMAGE_HEIGHT = 48


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic matrix of exact interval overlaps."""
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for k in range(n_out):
        lo = k * scale
        hi = (k + 1) * scale
        m_lo = int(np.floor(lo))
        m_hi = int(np.ceil(hi))
        for m in range(m_lo, min(m_hi, n_in)):
            overlap = min(hi, m + 1) - max(lo, m)
            if overlap > 0:
                w[k, m] = overlap
        w[k] /= scale
    return w


def render_depth_image(field: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Area-weighted downsampling of the field to an (out_h, out_w) image.

    Row 0 is the +y edge of the pad.  When the output dims equal the grid
    dims the image is an exact copy (up to the row flip).
    """
    if out_w < 8 or out_h < 8:
        raise ValueError("output dims must be at least 8x8")
    nx, ny = field.shape
    if out_w == nx and out_h == ny:
        resampled = field.copy()
    else:
        wx = _area_weights(nx, out_w)
        wy = _area_weights(ny, out_h)
        resampled = wx @ field @ wy.T
    # (out_w, out_h) indexed [ix, iy] -> image rows top-first
    return resampled.T[::-1].copy()


def image_cell_centers(
    sensor: SensorSpec, out_w: int, out_h: int
) -> tuple[np.ndarray, np.ndarray]:
    """Physical (x, y) centres of image columns and rows (row 0 at +y)."""
    px = sensor.width_mm / out_w
    py = sensor.height_mm / out_h
    xs = -0.5 * sensor.width_mm + (np.arange(out_w) + 0.5) * px
    ys = 0.5 * sensor.height_mm - (np.arange(out_h) + 0.5) * py
    return xs, ys
