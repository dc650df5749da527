"""Frozen, pre-aligned text and image embedding functions.

This module supplies a deterministic synthetic embedding space standing in
for a pretrained vision-language encoder pair: both sides are frozen, share
one codebook of per-category directions, and matched description/image
pairs score higher cosine than mismatched pairs by construction.  Externally
computed embeddings (e.g. from a real vision-language model) enter through
the binary store format instead; nothing here is trainable.

Layout of a synthetic embedding before projection: five class blocks of
D/8 values, one per contact dimension (shape, texture, depth, position,
area), plus one fine-grained block that only images populate.  Text
selects the parsed categories' codebook vectors and zeros the rest.
Images re-derive depth/position/area from the pixels and share those
codebook blocks with text; their fine-grained block carries mask
statistics (seven scale-normalised moment invariants plus a ridge
spectral-energy scalar) that text cannot express.  The concatenation is
mapped through a fixed orthonormal projection and L2-normalised.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, NoContactError
from .labeling import (
    DIMENSIONS,
    VOCABULARIES,
    image_contact_mask,
    measure_image_state,
    parse_description,
    parse_prompt,
)
from .sensor import SensorSpec

DEFAULT_EMBEDDING_DIM = 64
DEFAULT_CODEBOOK_SEED = 1234

#: class vectors within one dimension may not exceed this pairwise cosine
MAX_INTRA_DIMENSION_COSINE = 0.5


#: class blocks in layout order, then one image-only fine-grained block
N_BLOCKS = 6


@dataclass(frozen=True)
class AttributeCodebook:
    """Fixed random unit directions per (dimension, class) plus a projection.

    Regenerating with the same seed is bit-identical.  ``projection`` has
    orthonormal columns, so cosines computed on the concatenated blocks
    survive the projection exactly.
    """

    dim: int
    seed: int
    vectors: dict[str, np.ndarray]  # dimension -> (n_classes, dim//8)
    projection: np.ndarray  # (dim, N_BLOCKS * dim // 8)

    @property
    def block_size(self) -> int:
        return self.dim // 8


def build_codebook(
    dim: int = DEFAULT_EMBEDDING_DIM, seed: int = DEFAULT_CODEBOOK_SEED
) -> AttributeCodebook:
    """Deterministically generate the per-class directions and projection."""
    if dim < 8 or dim % 8 != 0:
        raise ValueError("embedding dim must be a positive multiple of 8")
    block = dim // 8
    rng = np.random.default_rng(seed)
    vectors: dict[str, np.ndarray] = {}
    for dimension in DIMENSIONS:
        classes = VOCABULARIES[dimension]
        chosen: list[np.ndarray] = []
        for _ in classes:
            # rejection keeps pairwise cosine below the separation bound
            for _attempt in range(20000):
                v = rng.normal(size=block)
                v /= np.linalg.norm(v)
                if all(
                    float(np.dot(v, u)) < MAX_INTRA_DIMENSION_COSINE for u in chosen
                ):
                    chosen.append(v)
                    break
            else:  # pragma: no cover - generous attempt budget
                raise RuntimeError(
                    f"could not place {len(classes)} separated vectors in R^{block}"
                )
        vectors[dimension] = np.stack(chosen)

    gauss = rng.normal(size=(dim, N_BLOCKS * block))
    q, _ = np.linalg.qr(gauss)
    return AttributeCodebook(dim=dim, seed=seed, vectors=vectors, projection=q)


def _project_normalize(codebook: AttributeCodebook, blocks: np.ndarray) -> np.ndarray:
    out = codebook.projection @ blocks
    norm = np.linalg.norm(out)
    if norm < 1e-12:
        raise ValueError("embedding collapsed to zero")
    return out / norm


def _class_block(codebook: AttributeCodebook, dimension: str, word: str) -> np.ndarray:
    idx = VOCABULARIES[dimension].index(word)
    return codebook.vectors[dimension][idx]


def embed_text_synthetic(text: str, codebook: AttributeCodebook) -> np.ndarray:
    """Unit-norm embedding of a description sentence or a one-dimension prompt."""
    blocks = np.zeros(N_BLOCKS * codebook.block_size)
    try:
        cats = parse_description(text)
        words = {dim: cats.for_dimension(dim) for dim in DIMENSIONS}
    except Exception:
        dimension, word = parse_prompt(text)  # raises DescriptionParseError
        words = {dimension: word}
    for i, dim in enumerate(DIMENSIONS):
        if dim in words:
            blocks[i * codebook.block_size : (i + 1) * codebook.block_size] = (
                _class_block(codebook, dim, words[dim])
            )
    return _project_normalize(codebook, blocks)


# ---------------------------------------------------------------------------
# Image embedding
# ---------------------------------------------------------------------------

def hu_moment_invariants(mask: np.ndarray) -> np.ndarray:
    """Seven scale-normalised moment invariants of a binary mask.

    Log-compressed (sign(h) * log10(|h| + 1e-30) scaled) for numeric
    comparability across contact sizes.
    """
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise NoContactError("empty contact mask")
    x = xs.astype(float)
    y = ys.astype(float)
    m00 = float(len(xs))
    cx = x.mean()
    cy = y.mean()
    dx = x - cx
    dy = y - cy

    def mu(p, q):
        return float(np.sum(dx**p * dy**q))

    def eta(p, q):
        return mu(p, q) / m00 ** (1 + (p + q) / 2.0)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03 = eta(3, 0), eta(0, 3)
    n21, n12 = eta(2, 1), eta(1, 2)

    h1 = n20 + n02
    h2 = (n20 - n02) ** 2 + 4 * n11**2
    h3 = (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2
    h4 = (n30 + n12) ** 2 + (n21 + n03) ** 2
    h5 = (n30 - 3 * n12) * (n30 + n12) * (
        (n30 + n12) ** 2 - 3 * (n21 + n03) ** 2
    ) + (3 * n21 - n03) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2)
    h6 = (n20 - n02) * ((n30 + n12) ** 2 - (n21 + n03) ** 2) + 4 * n11 * (
        n30 + n12
    ) * (n21 + n03)
    h7 = (3 * n21 - n03) * (n30 + n12) * (
        (n30 + n12) ** 2 - 3 * (n21 + n03) ** 2
    ) - (n30 - 3 * n12) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2)

    hs = np.array([h1, h2, h3, h4, h5, h6, h7])
    return np.sign(hs) * np.log10(np.abs(hs) + 1e-30) / 30.0


def ridge_spectral_energy(
    image: np.ndarray, sensor: SensorSpec, band_cycles_per_mm: tuple[float, float] = (0.4, 1.6)
) -> float:
    """Fraction of (non-DC) spectral energy inside the texture frequency band."""
    h, w = image.shape
    f = np.fft.fftshift(np.abs(np.fft.fft2(image - image.mean())) ** 2)
    fx = np.fft.fftshift(np.fft.fftfreq(w, d=sensor.width_mm / w))
    fy = np.fft.fftshift(np.fft.fftfreq(h, d=sensor.height_mm / h))
    gx, gy = np.meshgrid(fx, fy)
    freq = np.hypot(gx, gy)
    total = float(f.sum())
    if total < 1e-20:
        return 0.0
    band = (freq >= band_cycles_per_mm[0]) & (freq <= band_cycles_per_mm[1])
    return float(f[band].sum() / total)


def embed_image_synthetic(
    image: np.ndarray, codebook: AttributeCodebook, sensor: SensorSpec | None = None
) -> np.ndarray:
    """Unit-norm embedding of a rendered depth image.

    Raises :class:`NoContactError` when no pixel exceeds the contact
    threshold.
    """
    if sensor is None:
        sensor = SensorSpec()
    mask = image_contact_mask(image)
    if not np.any(mask):
        raise NoContactError("depth image has no contact pixels")

    depth, position, area = measure_image_state(image, sensor)

    fine = np.zeros(codebook.block_size)
    stats = np.concatenate(
        [hu_moment_invariants(mask), [ridge_spectral_energy(image, sensor)]]
    )
    fine[: min(len(stats), codebook.block_size)] = stats[: codebook.block_size]
    norm = np.linalg.norm(fine)
    if norm > 1e-12:
        fine = fine / norm

    b = codebook.block_size
    blocks = np.zeros(N_BLOCKS * b)
    blocks[2 * b : 3 * b] = _class_block(codebook, "depth", depth)
    blocks[3 * b : 4 * b] = _class_block(codebook, "position", position)
    blocks[4 * b : 5 * b] = _class_block(codebook, "area", area)
    blocks[5 * b : 6 * b] = fine  # image-only slot: no class word involved
    return _project_normalize(codebook, blocks)


# ---------------------------------------------------------------------------
# Embedding store (externally computed vectors)
# ---------------------------------------------------------------------------

STORE_MAGIC = b"TCLE"
STORE_VERSION = 1


@dataclass
class EmbeddingStore:
    """Immutable id -> unit vector map loaded from a store file."""

    dim: int
    vectors: dict[str, np.ndarray]

    def lookup(self, key: str) -> np.ndarray:
        try:
            return self.vectors[key]
        except KeyError:
            raise KeyError(f"embedding id not found in store: {key!r}") from None

    def __len__(self) -> int:
        return len(self.vectors)


def save_embedding_store(path, vectors: dict[str, np.ndarray]) -> None:
    """Write a store file; all vectors must share one dimension."""
    if not vectors:
        raise ValueError("cannot save an empty store")
    dims = {len(v) for v in vectors.values()}
    if len(dims) != 1:
        raise ValueError("all vectors in a store must share one dimension")
    dim = dims.pop()
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<III", STORE_VERSION, dim, len(vectors)))
        for key, vec in vectors.items():
            raw = key.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"id too long: {key[:32]!r}...")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def load_embedding_store(path) -> EmbeddingStore:
    """Read a store file, renormalising vectors whose norm drifts past 1e-4."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != STORE_MAGIC:
        raise FormatError(f"bad store magic: {data[:4]!r}")
    if len(data) < 16:
        raise FormatError("store header truncated")
    version, dim, count = struct.unpack_from("<III", data, 4)
    if version != STORE_VERSION:
        raise FormatError(f"unsupported store version {version}")
    offset = 16
    vectors: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 2 > len(data):
            raise FormatError("store truncated in entry header")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + id_len + 4 * dim > len(data):
            raise FormatError("store truncated in entry payload")
        key = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).astype(float)
        offset += 4 * dim
        if key in vectors:
            raise FormatError(f"duplicate id in store: {key!r}")
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > 1e-4:
            warnings.warn(
                f"store vector {key!r} has norm {norm:.6f}; renormalising",
                stacklevel=2,
            )
            if norm < 1e-12:
                raise FormatError(f"store vector {key!r} has zero norm")
            vec = vec / norm
        vectors[key] = vec
    if offset != len(data):
        raise FormatError("trailing bytes after final store entry")
    return EmbeddingStore(dim=dim, vectors=vectors)
