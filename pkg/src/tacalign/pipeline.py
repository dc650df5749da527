"""Wiring between datasets, embedding sources, the encoder, and evaluation.

An *embedding source* supplies the frozen target vectors: either the
deterministic synthetic space (default) or a pair of store files holding
externally computed vectors.  Store layout: ``text.tcle`` keyed by the
exact sentence (descriptions and prompts share one store) and
``image.tcle`` keyed by sample id.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import SampleRecord, load_clouds, load_images
from .embedding import (
    AttributeCodebook,
    EmbeddingStore,
    build_codebook,
    embed_image_synthetic,
    embed_text_synthetic,
    load_embedding_store,
)
from .encoder import EncoderParams, encode_batch, normalize_cloud
from .errors import DataError
from .evaluation import prompt_embeddings_synthetic
from .labeling import DIMENSIONS, VOCABULARIES, generate_prompt
from .sensor import SensorSpec
from .training import TripletDataset

TEXT_STORE_NAME = "text.tcle"
IMAGE_STORE_NAME = "image.tcle"


@dataclass
class SyntheticSource:
    codebook: AttributeCodebook

    @property
    def dim(self) -> int:
        return self.codebook.dim

    def text_embedding(self, sentence: str) -> np.ndarray:
        return embed_text_synthetic(sentence, self.codebook)

    def image_embedding(self, record_id: str, image: np.ndarray, sensor: SensorSpec) -> np.ndarray:
        return embed_image_synthetic(image, self.codebook, sensor)

    def prompt_matrix(self, dimension: str) -> np.ndarray:
        return prompt_embeddings_synthetic(dimension, self.codebook)


@dataclass
class StoreSource:
    text_store: EmbeddingStore
    image_store: EmbeddingStore

    @property
    def dim(self) -> int:
        return self.text_store.dim

    def text_embedding(self, sentence: str) -> np.ndarray:
        try:
            return self.text_store.lookup(sentence)
        except KeyError:
            raise DataError(f"text store has no embedding for: {sentence!r}") from None

    def image_embedding(self, record_id: str, image: np.ndarray, sensor: SensorSpec) -> np.ndarray:
        try:
            return self.image_store.lookup(record_id)
        except KeyError:
            raise DataError(f"image store has no embedding for id {record_id!r}") from None

    def prompt_matrix(self, dimension: str) -> np.ndarray:
        return np.stack(
            [
                self.text_embedding(generate_prompt(dimension, word))
                for word in VOCABULARIES[dimension]
            ]
        )


EmbeddingSource = SyntheticSource | StoreSource


def open_embedding_source(spec: str, dim: int) -> EmbeddingSource:
    """``"synthetic"`` or a directory holding ``text.tcle``/``image.tcle``."""
    if spec == "synthetic":
        return SyntheticSource(build_codebook(dim))
    base = Path(spec)
    text_path = base / TEXT_STORE_NAME
    image_path = base / IMAGE_STORE_NAME
    if not text_path.exists() or not image_path.exists():
        raise DataError(
            f"embedding store directory {spec!r} must contain "
            f"{TEXT_STORE_NAME} and {IMAGE_STORE_NAME}"
        )
    source = StoreSource(
        text_store=load_embedding_store(text_path),
        image_store=load_embedding_store(image_path),
    )
    if source.text_store.dim != source.image_store.dim:
        raise DataError("text and image stores disagree on embedding dimension")
    return source


def build_triplet_dataset(
    dataset_dir,
    records: list[SampleRecord],
    source: EmbeddingSource,
    sensor: SensorSpec | None = None,
) -> TripletDataset:
    """Load clouds, normalise them, and resolve both frozen embedding sets."""
    if sensor is None:
        sensor = SensorSpec()
    clouds = load_clouds(dataset_dir, records)
    normalized = normalize_cloud(clouds, sensor)
    images = load_images(dataset_dir, records)
    text = np.stack([source.text_embedding(r.description) for r in records])
    image = np.stack(
        [
            source.image_embedding(r.id, img, sensor)
            for r, img in zip(records, images)
        ]
    )
    return TripletDataset(
        ids=[r.id for r in records],
        clouds=normalized,
        text_embeddings=text,
        image_embeddings=image,
    )


def encode_records(
    dataset_dir,
    records: list[SampleRecord],
    params: EncoderParams,
    sensor: SensorSpec | None = None,
    batch_size: int = 256,
) -> np.ndarray:
    """Unit-norm tactile embeddings for the records, in manifest order."""
    if sensor is None:
        sensor = SensorSpec()
    clouds = normalize_cloud(load_clouds(dataset_dir, records), sensor)
    outputs = []
    for start in range(0, clouds.shape[0], batch_size):
        emb, _ = encode_batch(params, clouds[start : start + batch_size])
        outputs.append(emb)
    return np.vstack(outputs)


def oracle_embeddings(
    records: list[SampleRecord], source: EmbeddingSource
) -> np.ndarray:
    """Each sample's own text embedding, the plumbing upper bound."""
    return np.stack([source.text_embedding(r.description) for r in records])


def prompt_sets(source: EmbeddingSource) -> dict[str, np.ndarray]:
    return {dim: source.prompt_matrix(dim) for dim in DIMENSIONS}


def export_synthetic_stores(
    dataset_dir, records: list[SampleRecord], out_dir, dim: int
) -> None:
    """Materialise the synthetic space into store files (for store-mode runs)."""
    from .embedding import save_embedding_store

    source = SyntheticSource(build_codebook(dim))
    sensor = SensorSpec()
    images = load_images(dataset_dir, records)
    text_vectors: dict[str, np.ndarray] = {}
    for r in records:
        text_vectors.setdefault(r.description, source.text_embedding(r.description))
    for dimension in DIMENSIONS:
        for word in VOCABULARIES[dimension]:
            sentence = generate_prompt(dimension, word)
            text_vectors.setdefault(sentence, source.text_embedding(sentence))
    image_vectors = {
        r.id: source.image_embedding(r.id, img, sensor)
        for r, img in zip(records, images)
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_embedding_store(out / TEXT_STORE_NAME, text_vectors)
    save_embedding_store(out / IMAGE_STORE_NAME, image_vectors)
