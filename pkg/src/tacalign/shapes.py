"""Analytic signed-distance primitives and support functions.

This module defines the 19 contact-shape categories used by the gel
simulation, each with:

* an exact signed-distance function (negative inside, metric/1-Lipschitz),
  vectorised over point arrays of shape ``(..., 3)``;
* an exact support function ``max over the solid of <x, dir>``, used to
  place a posed shape at a prescribed penetration depth.

All lengths are millimetres.  Shapes live in a canonical frame: the z axis
is the principal axis where one exists, and solids are centred at the
origin (the dome's flat face and the corner tetrahedron's centroid sit at
the origin).  Poses rotate/translate query points into this frame.

Distance formulas for the curved primitives follow Inigo Quilez's distance
function catalogue; polygonal cross-sections use the exact simple-polygon
distance, and the ellipsoid solves the nearest-point root by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedShapeError

SHAPE_KINDS = (
    "sphere",
    "ellipsoid",
    "cuboid",
    "cube",
    "cylinder",
    "cone",
    "peak",
    "torus",
    "triangular-prism",
    "hexagonal-prism",
    "pyramid",
    "wedge",
    "capsule",
    "cross",
    "ring",
    "dome",
    "edge",
    "corner",
    "flat-plate",
)

TEXTURE_KINDS = ("smooth", "ridged", "grooved", "bumpy", "rough")

#: number of size parameters each shape kind expects
_PARAM_COUNT = {
    "sphere": 1,
    "ellipsoid": 3,
    "cuboid": 3,
    "cube": 1,
    "cylinder": 2,
    "cone": 2,
    "peak": 3,
    "torus": 2,
    "triangular-prism": 2,
    "hexagonal-prism": 2,
    "pyramid": 2,
    "wedge": 3,
    "capsule": 2,
    "cross": 3,
    "ring": 3,
    "dome": 1,
    "edge": 3,
    "corner": 1,
    "flat-plate": 3,
}

MAX_TEXTURE_AMPLITUDE_MM = 0.3
MIN_TEXTURE_WAVELENGTH_MM = 0.5


@dataclass(frozen=True)
class Primitive:
    """A contact object: one of the 19 shape kinds plus a surface texture.

    ``size_params`` carries 1-3 lengths whose meaning depends on the kind
    (see the per-shape functions below).  ``texture_amplitude_mm`` and
    ``texture_wavelength_mm`` drive the displacement-field modulation and
    are ignored for the ``smooth`` texture.
    """

    shape_kind: str
    size_params: tuple[float, ...]
    texture_kind: str = "smooth"
    texture_amplitude_mm: float = 0.0
    texture_wavelength_mm: float = 1.0

    def __post_init__(self) -> None:
        if self.shape_kind not in _PARAM_COUNT:
            raise UnsupportedShapeError(f"unknown shape kind: {self.shape_kind!r}")
        expected = _PARAM_COUNT[self.shape_kind]
        params = tuple(float(v) for v in self.size_params)
        object.__setattr__(self, "size_params", params)
        if len(params) != expected:
            raise ValueError(
                f"{self.shape_kind} takes {expected} size params, got {len(params)}"
            )
        if any(v <= 0.0 for v in params):
            raise ValueError("size_params must be strictly positive")
        if self.texture_kind not in TEXTURE_KINDS:
            raise ValueError(f"unknown texture kind: {self.texture_kind!r}")
        if not 0.0 <= self.texture_amplitude_mm <= MAX_TEXTURE_AMPLITUDE_MM:
            raise ValueError(
                f"texture_amplitude_mm must be in [0, {MAX_TEXTURE_AMPLITUDE_MM}]"
            )
        if self.texture_wavelength_mm < MIN_TEXTURE_WAVELENGTH_MM:
            raise ValueError(
                f"texture_wavelength_mm must be >= {MIN_TEXTURE_WAVELENGTH_MM}"
            )


# ---------------------------------------------------------------------------
# Small vector helpers (broadcast over leading dimensions)
# ---------------------------------------------------------------------------

def _length(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1))


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def _clamp(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


# ---------------------------------------------------------------------------
# 2-D building blocks (exact)
# ---------------------------------------------------------------------------

def polygon_sdf_2d(p: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Exact signed distance to a simple polygon; *p* has shape ``(..., 2)``.

    Works for convex and concave polygons in either winding; negative inside.
    """
    v = np.asarray(vertices, dtype=float)
    n = v.shape[0]
    d = _dot(p - v[0], p - v[0])
    s = np.ones(p.shape[:-1])
    for i in range(n):
        j = (i + 1) % n
        e = v[j] - v[i]
        w = p - v[i]
        t = _clamp(_dot(w, e) / float(e @ e), 0.0, 1.0)
        b = w - e * t[..., None]
        d = np.minimum(d, _dot(b, b))
        c1 = p[..., 1] >= v[i][1]
        c2 = p[..., 1] < v[j][1]
        c3 = e[0] * w[..., 1] > e[1] * w[..., 0]
        flip = (c1 & c2 & c3) | (~c1 & ~c2 & ~c3)
        s = np.where(flip, -s, s)
    return s * np.sqrt(d)


def annulus_sdf_2d(p: np.ndarray, r_inner: float, r_outer: float) -> np.ndarray:
    """Exact signed distance to the ring ``r_inner <= |p| <= r_outer``."""
    l = _length(p)
    return np.maximum(r_inner - l, l - r_outer)


def _extrude(d2: np.ndarray, axis_coord: np.ndarray, half_height: float) -> np.ndarray:
    """Exact 3-D distance of a solid extruded from an exact 2-D profile."""
    wz = np.abs(axis_coord) - half_height
    inside = np.minimum(np.maximum(d2, wz), 0.0)
    dx = np.maximum(d2, 0.0)
    dz = np.maximum(wz, 0.0)
    return inside + np.sqrt(dx * dx + dz * dz)


def _triangle_vertices_2d(circumradius: float) -> np.ndarray:
    """Equilateral triangle, one vertex on +y, circumscribed radius given."""
    ang = np.deg2rad([90.0, 210.0, 330.0])
    return circumradius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def _hexagon_vertices_2d(circumradius: float) -> np.ndarray:
    ang = np.deg2rad(np.arange(6) * 60.0)
    return circumradius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def _cross_vertices_2d(arm_half_len: float, arm_half_width: float) -> np.ndarray:
    """Plus-sign outline (12-gon), counter-clockwise."""
    l, w = arm_half_len, arm_half_width
    return np.array(
        [
            (w, w), (w, l), (-w, l), (-w, w), (-l, w), (-l, -w),
            (-w, -w), (-w, -l), (w, -l), (w, -w), (l, -w), (l, w),
        ],
        dtype=float,
    )


# ---------------------------------------------------------------------------
# 3-D primitive distances
# ---------------------------------------------------------------------------

def _sd_sphere(p, r):
    return _length(p) - r


def _sd_box(p, half):
    q = np.abs(p) - np.asarray(half, dtype=float)
    return _length(np.maximum(q, 0.0)) + np.minimum(np.max(q, axis=-1), 0.0)


def _sd_ellipsoid(p, radii):
    """Exact ellipsoid distance via the nearest-point root, by bisection.

    Solves sum_i (e_i u_i / (e_i^2 + t))^2 = 1 for the largest root t on
    (-min e_i^2, inf); the nearest surface point is x_i = e_i^2 u_i/(e_i^2+t).
    """
    e = np.asarray(radii, dtype=float)
    # 1e-7 mm floor keeps the root bracket valid and the nearest-point
    # recovery well-conditioned; it perturbs the query by at most 0.1 nm.
    u = np.maximum(np.abs(np.asarray(p, dtype=float)), 1e-7)
    e2 = e * e

    # Lower bracket sits just above the pole -e_min^2; offset by half the
    # pole term's numerator so f(t_lo) >= 3 > 0 holds for every point.
    j = int(np.argmin(e2))
    t_lo = -e2[j] + 0.5 * e[j] * u[..., j]
    t_hi = _length(e * u) + np.max(e2)

    def f(t):
        return np.sum((e * u / (e2 + t[..., None])) ** 2, axis=-1) - 1.0

    for _ in range(100):
        t_mid = 0.5 * (t_lo + t_hi)
        high = f(t_mid) > 0.0
        t_lo = np.where(high, t_mid, t_lo)
        t_hi = np.where(high, t_hi, t_mid)
    t = 0.5 * (t_lo + t_hi)

    x = e2 * u / (e2 + t[..., None])
    dist = _length(u - x)
    inside = np.sum((u / e) ** 2, axis=-1) < 1.0
    return np.where(inside, -dist, dist)


def _sd_cylinder(p, r, half_h):
    dr = _length(p[..., :2]) - r
    dz = np.abs(p[..., 2]) - half_h
    inside = np.minimum(np.maximum(dr, dz), 0.0)
    return inside + np.sqrt(np.maximum(dr, 0.0) ** 2 + np.maximum(dz, 0.0) ** 2)


def _sd_cone(p, r, h):
    """Exact capped cone: base disc radius *r* at z=-h/2, apex at z=+h/2."""
    q = np.array([r, -h])  # base rim in (radial, axial), apex at local origin
    w = np.stack([_length(p[..., :2]), p[..., 2] - 0.5 * h], axis=-1)
    a = w - q * _clamp(_dot(w, q) / float(q @ q), 0.0, 1.0)[..., None]
    b = w - q * np.stack(
        [_clamp(w[..., 0] / q[0], 0.0, 1.0), np.ones(w.shape[:-1])], axis=-1
    )
    k = np.sign(q[1])
    d = np.minimum(_dot(a, a), _dot(b, b))
    s = np.maximum(k * (w[..., 0] * q[1] - w[..., 1] * q[0]), k * (w[..., 1] - q[1]))
    return np.sqrt(d) * np.sign(s)


def _sd_round_cone(p, r_base, r_tip, h):
    """Exact rounded cone: sphere r_base at z=-h/2 joined to sphere r_tip at z=+h/2."""
    b = (r_base - r_tip) / h
    a = np.sqrt(max(1.0 - b * b, 0.0))
    q = np.stack([_length(p[..., :2]), p[..., 2] + 0.5 * h], axis=-1)
    k = q[..., 0] * (-b) + q[..., 1] * a
    out_base = _length(q) - r_base
    out_tip = _length(q - np.array([0.0, h])) - r_tip
    out_side = q[..., 0] * a + q[..., 1] * b - r_base
    return np.where(k < 0.0, out_base, np.where(k > a * h, out_tip, out_side))


def _sd_torus(p, major, minor):
    q = np.stack([_length(p[..., :2]) - major, p[..., 2]], axis=-1)
    return _length(q) - minor


def _sd_capsule(p, r, half_h):
    z = p[..., 2] - _clamp(p[..., 2], -half_h, half_h)
    q = np.stack([p[..., 0], p[..., 1], z], axis=-1)
    return _length(q) - r


def _pyramid_mesh(half_base: float, h: float) -> tuple[np.ndarray, tuple]:
    """Square pyramid, base at z=-h/2, apex at z=+h/2, as a triangle mesh."""
    hb = half_base
    verts = np.array(
        [
            (hb, hb, -0.5 * h),
            (-hb, hb, -0.5 * h),
            (-hb, -hb, -0.5 * h),
            (hb, -hb, -0.5 * h),
            (0.0, 0.0, 0.5 * h),
        ]
    )
    faces = ((0, 2, 1), (0, 3, 2), (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4))
    return verts, faces


def _sd_dome(p, r):
    """Exact solid hemisphere: flat face in the z=0 plane, cap toward +z."""
    q = np.stack([_length(p[..., :2]), p[..., 2]], axis=-1)
    on_cap = q[..., 1] >= 0.0
    d_cap = _length(q) - r
    in_disc = q[..., 0] < r
    d_below = np.where(in_disc, -q[..., 1], _length(q - np.array([r, 0.0])))
    return np.where(on_cap, np.where(d_cap > 0, d_cap, np.maximum(d_cap, -q[..., 1])),
                    d_below)


def _sd_convex_polyhedron(p, verts, faces):
    """Exact distance to a convex polyhedron from its triangulated surface.

    Unsigned distance is the minimum over exact point-triangle distances;
    the sign comes from the face half-space test (valid for convex solids).
    """
    d2_min = None
    inside = np.ones(p.shape[:-1], dtype=bool)
    centroid = verts.mean(axis=0)
    for ia, ib, ic in faces:
        a, b_, c = verts[ia], verts[ib], verts[ic]
        d2 = _point_triangle_dist2(p, a, b_, c)
        d2_min = d2 if d2_min is None else np.minimum(d2_min, d2)
        n = np.cross(b_ - a, c - a)
        if np.dot(n, centroid - a) > 0:  # orient outward
            n = -n
        inside &= _dot(p - a, n) <= 0.0
    dist = np.sqrt(d2_min)
    return np.where(inside, -dist, dist)


_TETRA_FACES = ((0, 2, 1), (0, 1, 3), (1, 2, 3), (2, 0, 3))


def _point_triangle_dist2(p, a, b, c):
    """Squared distance from points *p* to triangle *abc* (exact)."""
    ba, pa = b - a, p - a
    cb, pb = c - b, p - b
    ac, pc = a - c, p - c
    nor = np.cross(ba, ac)

    sign_sum = (
        np.sign(_dot(np.cross(ba, nor), pa))
        + np.sign(_dot(np.cross(cb, nor), pb))
        + np.sign(_dot(np.cross(ac, nor), pc))
    )
    edge_region = sign_sum < 2.0

    def seg_d2(e, w):
        t = _clamp(_dot(w, e) / float(e @ e), 0.0, 1.0)
        diff = w - e * t[..., None]
        return _dot(diff, diff)

    d_edges = np.minimum(np.minimum(seg_d2(ba, pa), seg_d2(cb, pb)), seg_d2(ac, pc))
    d_plane = _dot(nor, pa) ** 2 / float(nor @ nor)
    return np.where(edge_region, d_edges, d_plane)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def sdf_eval(primitive: Primitive, points: np.ndarray) -> np.ndarray:
    """Exact signed distance (mm) from *points* to the canonical primitive.

    *points* may be a single 3-vector or any ``(..., 3)`` array; the result
    drops the final axis.  Negative inside.
    """
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    if single:
        p = p[None, :]
    if p.shape[-1] != 3:
        raise ValueError("points must have shape (..., 3)")

    kind = primitive.shape_kind
    sp = primitive.size_params
    if kind == "sphere":
        d = _sd_sphere(p, sp[0])
    elif kind == "ellipsoid":
        d = _sd_ellipsoid(p, sp)
    elif kind in ("cuboid", "flat-plate"):
        d = _sd_box(p, sp)
    elif kind == "cube":
        d = _sd_box(p, (sp[0], sp[0], sp[0]))
    elif kind == "cylinder":
        d = _sd_cylinder(p, sp[0], sp[1])
    elif kind == "cone":
        d = _sd_cone(p, sp[0], sp[1])
    elif kind == "peak":
        d = _sd_round_cone(p, sp[0], sp[1], sp[2])
    elif kind == "torus":
        d = _sd_torus(p, sp[0], sp[1])
    elif kind == "triangular-prism":
        d2 = polygon_sdf_2d(p[..., :2], _triangle_vertices_2d(sp[0]))
        d = _extrude(d2, p[..., 2], sp[1])
    elif kind == "hexagonal-prism":
        d2 = polygon_sdf_2d(p[..., :2], _hexagon_vertices_2d(sp[0]))
        d = _extrude(d2, p[..., 2], sp[1])
    elif kind == "pyramid":
        d = _sd_convex_polyhedron(p, *_pyramid_mesh(sp[0], sp[1]))
    elif kind == "wedge":
        hx, hy, h = sp
        tri = np.array([(-hx, -0.5 * h), (hx, -0.5 * h), (-hx, 0.5 * h)])
        d2 = polygon_sdf_2d(np.stack([p[..., 0], p[..., 2]], axis=-1), tri)
        d = _extrude(d2, p[..., 1], hy)
    elif kind == "capsule":
        d = _sd_capsule(p, sp[0], sp[1])
    elif kind == "cross":
        d2 = polygon_sdf_2d(p[..., :2], _cross_vertices_2d(sp[0], sp[1]))
        d = _extrude(d2, p[..., 2], sp[2])
    elif kind == "ring":
        d2 = annulus_sdf_2d(p[..., :2], sp[1], sp[0])
        d = _extrude(d2, p[..., 2], sp[2])
    elif kind == "dome":
        d = _sd_dome(p, sp[0])
    elif kind == "edge":
        w, hl, h = sp
        tri = np.array([(-w, -0.5 * h), (w, -0.5 * h), (0.0, 0.5 * h)])
        d2 = polygon_sdf_2d(np.stack([p[..., 0], p[..., 2]], axis=-1), tri)
        d = _extrude(d2, p[..., 1], hl)
    elif kind == "corner":
        d = _sd_convex_polyhedron(p, _corner_vertices(sp[0]), _TETRA_FACES)
    else:  # pragma: no cover - guarded by Primitive validation
        raise UnsupportedShapeError(f"unknown shape kind: {kind!r}")

    return d[0] if single else d


def _corner_vertices(s: float) -> np.ndarray:
    v = np.array([(0, 0, 0), (s, 0, 0), (0, s, 0), (0, 0, s)], dtype=float)
    return v - v.mean(axis=0)


# ---------------------------------------------------------------------------
# Support functions: h(dir) = max over the solid of <x, dir>
# ---------------------------------------------------------------------------

def support(primitive: Primitive, direction: np.ndarray) -> float:
    """Exact support value of the canonical solid in a unit *direction*."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    kind = primitive.shape_kind
    sp = primitive.size_params
    dxy = float(np.hypot(d[0], d[1]))
    dz = float(d[2])

    if kind == "sphere":
        return sp[0]
    if kind == "ellipsoid":
        return float(np.linalg.norm(np.asarray(sp) * d))
    if kind in ("cuboid", "flat-plate"):
        return float(np.sum(np.asarray(sp) * np.abs(d)))
    if kind == "cube":
        return sp[0] * float(np.sum(np.abs(d)))
    if kind == "cylinder":
        return sp[0] * dxy + sp[1] * abs(dz)
    if kind == "cone":
        r, h = sp
        return max(r * dxy - 0.5 * h * dz, 0.5 * h * dz)
    if kind == "peak":
        r_base, r_tip, h = sp
        return max(r_base - 0.5 * h * dz, r_tip + 0.5 * h * dz)
    if kind == "torus":
        return sp[0] * dxy + sp[1]
    if kind == "capsule":
        return sp[0] + sp[1] * abs(dz)
    if kind == "ring":
        return sp[0] * dxy + sp[2] * abs(dz)
    if kind == "dome":
        return sp[0] if dz >= 0.0 else sp[0] * dxy
    if kind == "triangular-prism":
        return _polytope_support(_prism_vertices(_triangle_vertices_2d(sp[0]), sp[1]), d)
    if kind == "hexagonal-prism":
        return _polytope_support(_prism_vertices(_hexagon_vertices_2d(sp[0]), sp[1]), d)
    if kind == "pyramid":
        hb, h = sp
        base = [(sx * hb, sy * hb, -0.5 * h) for sx in (-1, 1) for sy in (-1, 1)]
        return _polytope_support(np.array(base + [(0, 0, 0.5 * h)]), d)
    if kind == "wedge":
        hx, hy, h = sp
        verts = [
            (-hx, sy * hy, -0.5 * h) for sy in (-1, 1)
        ] + [(hx, sy * hy, -0.5 * h) for sy in (-1, 1)] + [
            (-hx, sy * hy, 0.5 * h) for sy in (-1, 1)
        ]
        return _polytope_support(np.array(verts, dtype=float), d)
    if kind == "cross":
        l, w, hh = sp
        b1 = np.array([l, w, hh])
        b2 = np.array([w, l, hh])
        return float(max(np.sum(b1 * np.abs(d)), np.sum(b2 * np.abs(d))))
    if kind == "edge":
        w, hl, h = sp
        verts = [
            (-w, sy * hl, -0.5 * h) for sy in (-1, 1)
        ] + [(w, sy * hl, -0.5 * h) for sy in (-1, 1)] + [
            (0.0, sy * hl, 0.5 * h) for sy in (-1, 1)
        ]
        return _polytope_support(np.array(verts, dtype=float), d)
    if kind == "corner":
        return _polytope_support(_corner_vertices(sp[0]), d)
    raise UnsupportedShapeError(f"unknown shape kind: {kind!r}")  # pragma: no cover


def _prism_vertices(profile_2d: np.ndarray, half_h: float) -> np.ndarray:
    top = np.column_stack([profile_2d, np.full(len(profile_2d), half_h)])
    bot = np.column_stack([profile_2d, np.full(len(profile_2d), -half_h)])
    return np.vstack([top, bot])


def _polytope_support(vertices: np.ndarray, d: np.ndarray) -> float:
    return float(np.max(vertices @ d))


def bounding_radius(primitive: Primitive) -> float:
    """Radius of a sphere (centred at the canonical origin) containing the solid."""
    dirs = []
    for x in (-1.0, 0.0, 1.0):
        for y in (-1.0, 0.0, 1.0):
            for z in (-1.0, 0.0, 1.0):
                if x or y or z:
                    dirs.append((x, y, z))
    # support along +/- axis triples over-estimates |x| by at most sqrt(3)
    return float(np.sqrt(3.0) * max(support(primitive, d) for d in dirs))
