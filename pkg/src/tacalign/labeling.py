"""Contact-state computation, category bucketing, and text generation.

A contact state summarises one press along five dimensions: shape and
texture come from the primitive's metadata, while depth, position and area
are measured on the displacement grid.  The deepest cell defines the
contact position (ties resolved toward smaller x, then smaller y); samples
whose two deepest cells land in different position cells with a depth
margin under 0.02 mm carry an ambiguity flag.

Category vocabularies and bucket thresholds are fixed here so that labels
are reproducible; all bucketing is half-open on the right except the final
bucket, which closes the domain.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    DescriptionParseError,
    InvalidClassError,
    NoContactError,
    OutOfRangeError,
)
from .sensor import CONTACT_EPSILON_MM, SensorSpec, contact_mask
from .shapes import SHAPE_KINDS, TEXTURE_KINDS, Primitive

DEPTH_CATEGORIES = ("slight", "moderate", "deep", "very-deep")
DEPTH_EDGES_MM = (0.2, 0.8, 1.6, 2.4, 3.5)

AREA_CATEGORIES = ("tiny", "small", "medium", "large", "huge")
AREA_EDGES = (0.02, 0.08, 0.20, 0.45)

POSITION_CATEGORIES = (
    "top-left", "top-center", "top-right",
    "middle-left", "center", "middle-right",
    "bottom-left", "bottom-center", "bottom-right",
)

VOCABULARIES = {
    "shape": SHAPE_KINDS,
    "texture": TEXTURE_KINDS,
    "depth": DEPTH_CATEGORIES,
    "position": POSITION_CATEGORIES,
    "area": AREA_CATEGORIES,
}

DIMENSIONS = ("shape", "texture", "depth", "position", "area")

#: deepest vs runner-up margin (mm) below which a cross-cell tie is flagged
POSITION_AMBIGUITY_MARGIN_MM = 0.02


@dataclass(frozen=True)
class Categories:
    """The five categorical labels of a contact."""

    shape: str
    texture: str
    depth_cat: str
    position_cat: str
    area_cat: str

    def for_dimension(self, dimension: str) -> str:
        return {
            "shape": self.shape,
            "texture": self.texture,
            "depth": self.depth_cat,
            "position": self.position_cat,
            "area": self.area_cat,
        }[dimension]


@dataclass(frozen=True)
class ContactState:
    """Categorical contact labels plus their raw scalar sources."""

    shape: str
    texture: str
    depth_cat: str
    d_max_mm: float
    position_cat: str
    deepest_xy_mm: tuple[float, float]
    area_cat: str
    area_fraction: float
    warn_ambiguous_position: bool = False

    def categories(self) -> Categories:
        return Categories(
            self.shape, self.texture, self.depth_cat, self.position_cat, self.area_cat
        )


# ---------------------------------------------------------------------------
# Bucketing
# ---------------------------------------------------------------------------

def bucket_depth(d_max_mm: float) -> str:
    """slight [0.2, 0.8) | moderate [0.8, 1.6) | deep [1.6, 2.4) | very-deep [2.4, 3.5]."""
    if d_max_mm < DEPTH_EDGES_MM[0]:
        raise NoContactError(f"d_max {d_max_mm} mm is below the contact minimum 0.2 mm")
    if d_max_mm > DEPTH_EDGES_MM[-1]:
        raise OutOfRangeError(f"d_max {d_max_mm} mm exceeds the pad maximum 3.5 mm")
    for name, hi in zip(DEPTH_CATEGORIES[:-1], DEPTH_EDGES_MM[1:-1]):
        if d_max_mm < hi:
            return name
    return DEPTH_CATEGORIES[-1]


def bucket_area(area_fraction: float) -> str:
    """tiny <0.02 | small [0.02,0.08) | medium [0.08,0.20) | large [0.20,0.45) | huge >=0.45."""
    if area_fraction <= 0.0:
        raise NoContactError("area fraction must be positive")
    if area_fraction > 1.0:
        raise OutOfRangeError("area fraction cannot exceed 1")
    for name, hi in zip(AREA_CATEGORIES[:-1], AREA_EDGES):
        if area_fraction < hi:
            return name
    return AREA_CATEGORIES[-1]


def bucket_position(xy_mm: tuple[float, float], sensor: SensorSpec) -> str:
    """3x3 uniform partition; +y is top, +x is right.

    Points on an interior boundary belong to the cell on the right (columns)
    or below (rows).
    """
    x, y = float(xy_mm[0]), float(xy_mm[1])
    hw = 0.5 * sensor.width_mm
    hh = 0.5 * sensor.height_mm
    if not (-hw <= x <= hw and -hh <= y <= hh):
        raise OutOfRangeError(f"({x}, {y}) lies outside the pad bounds")
    bx = sensor.width_mm / 6.0
    by = sensor.height_mm / 6.0

    if x < -bx:
        col = 0
    elif x < bx:
        col = 1
    else:
        col = 2
    # boundary points go to the lower (bottom-ward) row
    if y > by:
        row = 0
    elif y > -by:
        row = 1
    else:
        row = 2
    return POSITION_CATEGORIES[row * 3 + col]


# ---------------------------------------------------------------------------
# Contact state
# ---------------------------------------------------------------------------

def deepest_cell(field: np.ndarray) -> tuple[int, int]:
    """Index of the deepest cell; ties resolve to smallest ix, then smallest iy."""
    flat = int(np.argmax(field))  # C order scans iy fastest at fixed ix
    return np.unravel_index(flat, field.shape)  # type: ignore[return-value]


def compute_contact_state(
    field: np.ndarray, primitive: Primitive, sensor: SensorSpec
) -> ContactState:
    """Measure the five-dimensional contact state of a displacement field."""
    mask = contact_mask(field)
    if not np.any(mask):
        raise NoContactError("displacement field has no active contact")

    ix, iy = deepest_cell(field)
    d_max = float(field[ix, iy])
    xs, ys = sensor.cell_centers()
    deepest_xy = (float(xs[ix]), float(ys[iy]))

    area_fraction = float(np.count_nonzero(mask)) / field.size

    flat = field.ravel()
    order = np.argsort(flat)
    top, runner = order[-1], order[-2]
    margin = float(flat[top] - flat[runner])
    rx, ry = np.unravel_index(runner, field.shape)
    ambiguous = (
        margin < POSITION_AMBIGUITY_MARGIN_MM
        and bucket_position((float(xs[rx]), float(ys[ry])), sensor)
        != bucket_position(deepest_xy, sensor)
    )

    return ContactState(
        shape=primitive.shape_kind,
        texture=primitive.texture_kind,
        depth_cat=bucket_depth(d_max),
        d_max_mm=d_max,
        position_cat=bucket_position(deepest_xy, sensor),
        deepest_xy_mm=deepest_xy,
        area_cat=bucket_area(area_fraction),
        area_fraction=area_fraction,
        warn_ambiguous_position=bool(ambiguous),
    )


# ---------------------------------------------------------------------------
# Text generation / parsing
# ---------------------------------------------------------------------------

DESCRIPTION_TEMPLATE = (
    "a {texture} {shape} object, pressed {depth} in {position} with {area} contact area."
)

_DESCRIPTION_RE = re.compile(
    r"^a ([a-z-]+) ([a-z-]+) object, pressed ([a-z-]+) in ([a-z-]+) "
    r"with ([a-z-]+) contact area\.$"
)

PROMPT_TEMPLATES = {
    "shape": "This is a {}",
    "depth": "Contact is {}",
    "position": "Contact at {}",
    "texture": "Surface feels {}",
    "area": "Contact area is {}",
}

_PROMPT_RES = {
    "shape": re.compile(r"^This is a ([a-z-]+)$"),
    "depth": re.compile(r"^Contact is ([a-z-]+)$"),
    "position": re.compile(r"^Contact at ([a-z-]+)$"),
    "texture": re.compile(r"^Surface feels ([a-z-]+)$"),
    "area": re.compile(r"^Contact area is ([a-z-]+)$"),
}


def generate_description(state: ContactState | Categories) -> str:
    """Fill the description template from a contact state (deterministic)."""
    return DESCRIPTION_TEMPLATE.format(
        texture=state.texture,
        shape=state.shape,
        depth=state.depth_cat,
        position=state.position_cat,
        area=state.area_cat,
    )


def parse_description(text: str) -> Categories:
    """Invert :func:`generate_description`; raises on any template deviation."""
    m = _DESCRIPTION_RE.match(text)
    if m is None:
        raise DescriptionParseError(f"text does not match the description template: {text!r}")
    texture, shape, depth, position, area = m.groups()
    cats = Categories(shape, texture, depth, position, area)
    for dim in DIMENSIONS:
        word = cats.for_dimension(dim)
        if word not in VOCABULARIES[dim]:
            raise DescriptionParseError(f"{word!r} is not a valid {dim} word")
    return cats


def generate_prompt(dimension: str, class_word: str) -> str:
    """Single-dimension probe sentence for zero-shot classification."""
    if dimension not in VOCABULARIES:
        raise InvalidClassError(f"unknown dimension {dimension!r}")
    if class_word not in VOCABULARIES[dimension]:
        raise InvalidClassError(f"{class_word!r} is not in the {dimension} vocabulary")
    return PROMPT_TEMPLATES[dimension].format(class_word)


def parse_prompt(text: str) -> tuple[str, str]:
    """Recover (dimension, class_word) from a prompt sentence."""
    for dim, rex in _PROMPT_RES.items():
        m = rex.match(text)
        if m is not None and m.group(1) in VOCABULARIES[dim]:
            return dim, m.group(1)
    raise DescriptionParseError(f"text matches no prompt template: {text!r}")


def image_contact_mask(image: np.ndarray, eps: float = CONTACT_EPSILON_MM) -> np.ndarray:
    """Contact pixels of a depth image.

    Area-averaged rendering dilutes very small patches, so the threshold
    drops to half the image maximum when that maximum sits below *eps*;
    an all-zero image yields an empty mask.
    """
    peak = float(image.max()) if image.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(image, dtype=bool)
    return image > min(eps, 0.5 * peak)


def measure_image_state(
    image: np.ndarray, sensor: SensorSpec, eps: float = CONTACT_EPSILON_MM
) -> tuple[str, str, str]:
    """(depth, position, area) categories re-derived from a depth image."""
    mask = image_contact_mask(image, eps)
    if not np.any(mask):
        raise NoContactError("depth image has no contact pixels")
    h, w = image.shape
    r, c = np.unravel_index(int(np.argmax(image)), image.shape)
    from .sensor import image_cell_centers

    xs, ys = image_cell_centers(sensor, w, h)
    d_max = float(image.max())
    # image maxima sit slightly below the grid maxima after area averaging;
    # clamp into the bucketable domain instead of failing at the edges
    d_max = min(max(d_max, DEPTH_EDGES_MM[0]), DEPTH_EDGES_MM[-1])
    depth = bucket_depth(d_max)
    position = bucket_position((float(xs[c]), float(ys[r])), sensor)
    area = bucket_area(float(np.count_nonzero(mask)) / image.size)
    return depth, position, area
