"""Binary file formats for point clouds and depth images.

Point cloud (.tclp): magic ``TCLP``, u32 version=1, u32 N, then N x 3
float32 little-endian (x, y, z in mm).

Depth image (.tcld): magic ``TCLD``, u32 w, u32 h, then w*h float32
little-endian, row-major (row 0 at the top edge of the pad), values in mm.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError

CLOUD_MAGIC = b"TCLP"
CLOUD_VERSION = 1
IMAGE_MAGIC = b"TCLD"


def save_point_cloud(path, points: np.ndarray) -> None:
    pts = np.asarray(points, dtype="<f4")
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("point cloud must have shape (N, 3)")
    with open(path, "wb") as fh:
        fh.write(CLOUD_MAGIC)
        fh.write(struct.pack("<II", CLOUD_VERSION, pts.shape[0]))
        fh.write(pts.tobytes())


def load_point_cloud(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CLOUD_MAGIC:
        raise FormatError(f"bad point-cloud magic: {data[:4]!r}")
    if len(data) < 12:
        raise FormatError("point-cloud header truncated")
    version, count = struct.unpack_from("<II", data, 4)
    if version != CLOUD_VERSION:
        raise FormatError(f"unsupported point-cloud version {version}")
    expected = 12 + 12 * count
    if len(data) != expected:
        raise FormatError(
            f"point-cloud payload is {len(data) - 12} bytes, expected {12 * count}"
        )
    pts = np.frombuffer(data, dtype="<f4", count=3 * count, offset=12)
    return pts.reshape(count, 3).astype(np.float64)


def save_depth_image(path, pixels: np.ndarray) -> None:
    img = np.asarray(pixels, dtype="<f4")
    if img.ndim != 2:
        raise ValueError("depth image must be a 2-D array")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(IMAGE_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(img.tobytes())


def load_depth_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != IMAGE_MAGIC:
        raise FormatError(f"bad depth-image magic: {data[:4]!r}")
    if len(data) < 12:
        raise FormatError("depth-image header truncated")
    w, h = struct.unpack_from("<II", data, 4)
    expected = 12 + 4 * w * h
    if len(data) != expected:
        raise FormatError(
            f"depth-image payload is {len(data) - 12} bytes, expected {4 * w * h}"
        )
    img = np.frombuffer(data, dtype="<f4", count=w * h, offset=12)
    return img.reshape(h, w).astype(np.float64)
