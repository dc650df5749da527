"""Dataset generation pipeline and manifest handling.

Each sample is one simulated press: a primitive with random size and
texture, a random contact pose, the resulting displacement field, a point
cloud sampled from the contact patch, a rendered depth image, and the
contact-state labels with their templated description.  Samples are
balanced over the 19 shape categories and derive all randomness from
``SeedSequence(master_seed, sample_index)``, so any sample can be
regenerated in isolation and whole runs are byte-reproducible.

The manifest is one JSON object per line; clouds and images live in
``clouds/`` and ``images/`` next to it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as tio
from .contact import ContactPose, sample_contact_pose_large, sample_contact_pose_small
from .errors import DataError, NoContactError, OutOfRangeError
from .labeling import ContactState, compute_contact_state, generate_description
from .sensor import (
    DEFAULT_IMAGE_HEIGHT,
    DEFAULT_IMAGE_WIDTH,
    DEFAULT_POINT_COUNT,
    SensorSpec,
    compute_displacement_field,
    render_depth_image,
    sample_point_cloud,
)
from .shapes import SHAPE_KINDS, TEXTURE_KINDS, Primitive
from .training import augment_cloud

MAX_SAMPLE_RETRIES = 25


@dataclass(frozen=True)
class SampleRecord:
    """One manifest row."""

    id: str
    shape: str
    texture: str
    depth_cat: str
    d_max_mm: float
    position_cat: str
    deepest_xy_mm: tuple[float, float]
    area_cat: str
    area_fraction: float
    description: str
    cloud_path: str
    image_path: str
    seed: int
    warn_ambiguous_position: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "shape": self.shape,
                "texture": self.texture,
                "depth_cat": self.depth_cat,
                "d_max_mm": self.d_max_mm,
                "position_cat": self.position_cat,
                "deepest_xy_mm": list(self.deepest_xy_mm),
                "area_cat": self.area_cat,
                "area_fraction": self.area_fraction,
                "description": self.description,
                "cloud_path": self.cloud_path,
                "image_path": self.image_path,
                "seed": self.seed,
                "warn_ambiguous_position": self.warn_ambiguous_position,
            }
        )

    @staticmethod
    def from_json(line: str) -> "SampleRecord":
        d = json.loads(line)
        return SampleRecord(
            id=d["id"],
            shape=d["shape"],
            texture=d["texture"],
            depth_cat=d["depth_cat"],
            d_max_mm=d["d_max_mm"],
            position_cat=d["position_cat"],
            deepest_xy_mm=(d["deepest_xy_mm"][0], d["deepest_xy_mm"][1]),
            area_cat=d["area_cat"],
            area_fraction=d["area_fraction"],
            description=d["description"],
            cloud_path=d["cloud_path"],
            image_path=d["image_path"],
            seed=d["seed"],
            warn_ambiguous_position=d["warn_ambiguous_position"],
        )


# ---------------------------------------------------------------------------
# Random primitives
# ---------------------------------------------------------------------------

#: canonical millimetre sizes per shape; samples jitter these by +-10%
CANONICAL_SIZES: dict[str, tuple[float, ...]] = {
    "sphere": (5.0,),
    "ellipsoid": (4.0, 7.0, 2.4),
    "cuboid": (3.0, 5.4, 2.0),
    "cube": (3.5,),
    "cylinder": (3.0, 5.0),
    "cone": (4.0, 7.0),
    "peak": (4.0, 1.2, 8.0),
    "torus": (4.5, 1.6),
    "triangular-prism": (4.0, 5.0),
    "hexagonal-prism": (3.5, 5.0),
    "pyramid": (4.0, 6.0),
    "wedge": (3.0, 5.0, 5.0),
    "capsule": (2.2, 4.0),
    "cross": (4.5, 1.4, 3.0),
    "ring": (5.0, 3.0, 3.0),
    "dome": (5.5,),
    "edge": (2.5, 6.0, 5.0),
    "corner": (9.0,),
    "flat-plate": (13.0, 10.0, 2.5),
}


def random_primitive(shape_kind: str, rng: np.random.Generator) -> Primitive:
    """Draw size and texture parameters around the shape's canonical scale.

    Sizes jitter by +-10% so within-class variation stays coverable at a
    few hundred samples per class while classes remain visibly distinct.
    """
    canonical = CANONICAL_SIZES.get(shape_kind)
    if canonical is None:
        raise DataError(f"unknown shape kind {shape_kind!r}")
    sizes = tuple(s * rng.uniform(0.9, 1.1) for s in canonical)

    texture = TEXTURE_KINDS[rng.integers(0, len(TEXTURE_KINDS))]
    if texture == "smooth":
        amp, wl = 0.0, 1.0
    else:
        amp = rng.uniform(0.05, 0.2)
        wl = rng.uniform(0.5, 2.5)
    return Primitive(shape_kind, sizes, texture, amp, wl)


# ---------------------------------------------------------------------------
# Single-sample synthesis
# ---------------------------------------------------------------------------

@dataclass
class GeneratedSample:
    primitive: Primitive
    pose: ContactPose
    field: np.ndarray
    cloud: np.ndarray
    image: np.ndarray
    state: ContactState
    description: str


def generate_sample(
    shape_kind: str,
    sample_seed: int,
    sensor: SensorSpec,
    n_points: int = DEFAULT_POINT_COUNT,
    image_size: tuple[int, int] = (DEFAULT_IMAGE_WIDTH, DEFAULT_IMAGE_HEIGHT),
    jitter: bool = True,
) -> GeneratedSample:
    """Deterministically synthesise one sample from its per-sample seed.

    Draws are retried (with fresh randomness from the same stream) when a
    press misses the pad or its labels fall outside the bucketable range,
    so every emitted sample carries valid labels.
    """
    rng = np.random.default_rng(sample_seed)
    last_error: Exception | None = None
    for _ in range(MAX_SAMPLE_RETRIES):
        try:
            primitive = random_primitive(shape_kind, rng)
            # surface-normal presses dominate: they produce the most
            # shape-characteristic patches; free-orientation presses add
            # edge/corner touch diversity
            if rng.uniform() < 0.9:
                pose = sample_contact_pose_large(
                    primitive, rng, sensor.max_depth_mm,
                    sensor.width_mm, sensor.height_mm,
                )
            else:
                pose = sample_contact_pose_small(
                    rng, primitive, sensor.max_depth_mm,
                    sensor.width_mm, sensor.height_mm,
                )
            field = compute_displacement_field(primitive, pose, sensor)
            state = compute_contact_state(field, primitive, sensor)
            cloud = sample_point_cloud(field, n_points, rng, sensor)
            cloud = augment_cloud(
                cloud, rng, sensor, n_points,
                translate=False, rotate=False, jitter=jitter,
            )
            image = render_depth_image(field, image_size[0], image_size[1])
            return GeneratedSample(
                primitive=primitive,
                pose=pose,
                field=field,
                cloud=cloud,
                image=image,
                state=state,
                description=generate_description(state),
            )
        except (NoContactError, OutOfRangeError) as exc:
            last_error = exc
    raise DataError(
        f"could not generate a valid {shape_kind} sample from seed {sample_seed}"
    ) from last_error


def sample_seed_for(master_seed: int, index: int) -> int:
    """Independent per-sample seed derived from (master seed, sample index)."""
    return int(np.random.SeedSequence((master_seed, index)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Dataset-level generation
# ---------------------------------------------------------------------------

def shape_plan(count: int) -> list[str]:
    """Balanced shape assignment: index i gets SHAPE_KINDS[i % 19]."""
    return [SHAPE_KINDS[i % len(SHAPE_KINDS)] for i in range(count)]


def generate_dataset(
    out_dir,
    count: int,
    master_seed: int,
    sensor: SensorSpec | None = None,
    n_points: int = DEFAULT_POINT_COUNT,
    image_size: tuple[int, int] = (DEFAULT_IMAGE_WIDTH, DEFAULT_IMAGE_HEIGHT),
    jitter: bool = True,
) -> list[SampleRecord]:
    """Write manifest.jsonl plus per-sample cloud and image files."""
    if sensor is None:
        sensor = SensorSpec()
    out = Path(out_dir)
    (out / "clouds").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)

    records: list[SampleRecord] = []
    for index, shape_kind in enumerate(shape_plan(count)):
        seed = sample_seed_for(master_seed, index)
        sample = generate_sample(
            shape_kind, seed, sensor, n_points, image_size, jitter=jitter
        )
        sid = f"s{index:06d}"
        cloud_rel = f"clouds/{sid}.tclp"
        image_rel = f"images/{sid}.tcld"
        tio.save_point_cloud(out / cloud_rel, sample.cloud)
        tio.save_depth_image(out / image_rel, sample.image)
        st = sample.state
        records.append(
            SampleRecord(
                id=sid,
                shape=st.shape,
                texture=st.texture,
                depth_cat=st.depth_cat,
                d_max_mm=st.d_max_mm,
                position_cat=st.position_cat,
                deepest_xy_mm=st.deepest_xy_mm,
                area_cat=st.area_cat,
                area_fraction=st.area_fraction,
                description=sample.description,
                cloud_path=cloud_rel,
                image_path=image_rel,
                seed=seed,
                warn_ambiguous_position=st.warn_ambiguous_position,
            )
        )

    with open(out / "manifest.jsonl", "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    return records


def load_manifest(dataset_dir) -> list[SampleRecord]:
    path = Path(dataset_dir) / "manifest.jsonl"
    if not path.exists():
        raise DataError(f"no manifest.jsonl under {dataset_dir}")
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(SampleRecord.from_json(line))
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError("manifest contains duplicate ids")
    return records


def load_clouds(dataset_dir, records: list[SampleRecord]) -> np.ndarray:
    """(n, N, 3) stack of the records' point clouds in manifest order."""
    base = Path(dataset_dir)
    clouds = [tio.load_point_cloud(base / r.cloud_path) for r in records]
    counts = {c.shape[0] for c in clouds}
    if len(counts) != 1:
        raise DataError("clouds have inconsistent point counts")
    return np.stack(clouds)


def load_images(dataset_dir, records: list[SampleRecord]) -> list[np.ndarray]:
    base = Path(dataset_dir)
    return [tio.load_depth_image(base / r.image_path) for r in records]


def split_records(
    records: list[SampleRecord], holdout: int, split_seed: int
) -> tuple[list[SampleRecord], list[SampleRecord]]:
    """Deterministic disjoint (train, eval) partition by shuffled index."""
    if not 0 < holdout < len(records):
        raise DataError(
            f"holdout {holdout} must be strictly between 0 and {len(records)}"
        )
    perm = np.random.default_rng(split_seed).permutation(len(records))
    eval_idx = set(perm[:holdout].tolist())
    train = [r for i, r in enumerate(records) if i not in eval_idx]
    evaluation = [r for i, r in enumerate(records) if i in eval_idx]
    return train, evaluation
