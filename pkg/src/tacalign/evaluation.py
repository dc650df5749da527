"""Zero-shot classification and frozen-encoder probing.

Zero-shot: each contact dimension gets one prompt sentence per class; a
tactile embedding is classified by the highest cosine against the prompt
embeddings, ties resolved by vocabulary order.  Probing: a small trainable
head (D -> 128 -> classes) is fit with softmax cross-entropy on frozen
tactile embeddings.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dataset import SampleRecord
from .embedding import AttributeCodebook, embed_text_synthetic
from .errors import DataError, DegenerateDataError
from .labeling import DIMENSIONS, VOCABULARIES, generate_prompt

PROBE_HIDDEN = 128
PROBE_EPOCHS = 20


@dataclass
class ZeroShotReport:
    accuracies: dict[str, float]  # dimension -> accuracy in percent
    confusions: dict[str, np.ndarray]  # dimension -> (n_classes, n_classes)
    sample_count: int

    def accuracy_from_confusion(self, dimension: str) -> float:
        c = self.confusions[dimension]
        total = c.sum()
        return 100.0 * float(np.trace(c)) / float(total) if total else 0.0


def prompt_embeddings_synthetic(
    dimension: str, codebook: AttributeCodebook
) -> np.ndarray:
    """(n_classes, D) prompt embeddings in vocabulary order."""
    return np.stack(
        [
            embed_text_synthetic(generate_prompt(dimension, word), codebook)
            for word in VOCABULARIES[dimension]
        ]
    )


def zero_shot_classify(
    f_t: np.ndarray, dimension: str, prompt_embeddings: np.ndarray
) -> str:
    """Highest-cosine class for one tactile embedding; first class wins ties."""
    vocab = VOCABULARIES[dimension]
    if prompt_embeddings.shape[0] != len(vocab):
        raise ValueError(
            f"{dimension} needs {len(vocab)} prompt embeddings, "
            f"got {prompt_embeddings.shape[0]}"
        )
    v = np.asarray(f_t, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        raise ValueError("zero tactile embedding")
    sims = prompt_embeddings @ (v / norm)
    return vocab[int(np.argmax(sims))]


def eval_zero_shot(
    records: list[SampleRecord],
    embeddings: np.ndarray,
    prompt_sets: dict[str, np.ndarray],
) -> ZeroShotReport:
    """Classify every sample on all five dimensions and aggregate.

    *embeddings* are the tactile embeddings in record order; *prompt_sets*
    maps each dimension to its (n_classes, D) prompt matrix.
    """
    if len(records) != embeddings.shape[0]:
        raise DataError("record and embedding counts differ")
    accuracies: dict[str, float] = {}
    confusions: dict[str, np.ndarray] = {}
    for dim in DIMENSIONS:
        vocab = VOCABULARIES[dim]
        index = {w: i for i, w in enumerate(vocab)}
        prompts = prompt_sets[dim]
        sims = embeddings @ prompts.T  # embeddings are unit rows
        predicted = np.argmax(sims, axis=1)
        confusion = np.zeros((len(vocab), len(vocab)), dtype=np.int64)
        hits = 0
        for rec, pred in zip(records, predicted):
            true_word = _true_word(rec, dim)
            t = index[true_word]
            confusion[t, int(pred)] += 1
            hits += int(int(pred) == t)
        accuracies[dim] = 100.0 * hits / len(records)
        confusions[dim] = confusion
    return ZeroShotReport(
        accuracies=accuracies, confusions=confusions, sample_count=len(records)
    )


def _true_word(record: SampleRecord, dimension: str) -> str:
    return {
        "shape": record.shape,
        "texture": record.texture,
        "depth": record.depth_cat,
        "position": record.position_cat,
        "area": record.area_cat,
    }[dimension]


def write_report_csv(path, report: ZeroShotReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension", "accuracy", "n"])
        for dim in DIMENSIONS:
            writer.writerow([dim, repr(report.accuracies[dim]), report.sample_count])


def write_confusion_csv(path, report: ZeroShotReport, dimension: str) -> None:
    vocab = VOCABULARIES[dimension]
    confusion = report.confusions[dimension]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(vocab))
        for row in confusion:
            writer.writerow([int(v) for v in row])


# ---------------------------------------------------------------------------
# Probe head
# ---------------------------------------------------------------------------

@dataclass
class ProbeConfig:
    epochs: int = PROBE_EPOCHS
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0


@dataclass
class ProbeHead:
    w1: np.ndarray  # (D, 128)
    b1: np.ndarray
    w2: np.ndarray  # (128, classes)
    b2: np.ndarray

    def logits(self, features: np.ndarray) -> np.ndarray:
        h = np.maximum(features @ self.w1 + self.b1, 0.0)
        return h @ self.w2 + self.b2

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(features), axis=1)


def _probe_init(dim: int, n_classes: int, seed: int) -> ProbeHead:
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / dim), size=(dim, PROBE_HIDDEN))
    w2 = rng.normal(0.0, np.sqrt(2.0 / PROBE_HIDDEN), size=(PROBE_HIDDEN, n_classes))
    return ProbeHead(w1=w1, b1=np.zeros(PROBE_HIDDEN), w2=w2, b2=np.zeros(n_classes))


def train_probe(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    config: ProbeConfig | None = None,
) -> ProbeHead:
    """Softmax cross-entropy fit of the head on frozen features (Adam)."""
    if config is None:
        config = ProbeConfig()
    y = np.asarray(labels, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise DegenerateDataError("probe training needs at least two classes present")
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    head = _probe_init(x.shape[1], n_classes, config.seed)
    rng = np.random.default_rng(config.seed)

    tensors = ("w1", "b1", "w2", "b2")
    m = {t: np.zeros_like(getattr(head, t)) for t in tensors}
    v = {t: np.zeros_like(getattr(head, t)) for t in tensors}
    step = 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            if idx.size < 2:
                continue
            xb, yb = x[idx], y[idx]
            h_pre = xb @ head.w1 + head.b1
            h = np.maximum(h_pre, 0.0)
            logits = h @ head.w2 + head.b2
            shifted = logits - logits.max(axis=1, keepdims=True)
            probs = np.exp(shifted)
            probs /= probs.sum(axis=1, keepdims=True)
            d_logits = probs
            d_logits[np.arange(len(yb)), yb] -= 1.0
            d_logits /= len(yb)
            grads = {
                "w2": h.T @ d_logits,
                "b2": d_logits.sum(axis=0),
            }
            d_h = (d_logits @ head.w2.T) * (h_pre > 0.0)
            grads["w1"] = xb.T @ d_h
            grads["b1"] = d_h.sum(axis=0)

            step += 1
            for t in tensors:
                g = grads[t]
                m[t] = 0.9 * m[t] + 0.1 * g
                v[t] = 0.999 * v[t] + 0.001 * g * g
                m_hat = m[t] / (1.0 - 0.9**step)
                v_hat = v[t] / (1.0 - 0.999**step)
                setattr(
                    head, t,
                    getattr(head, t)
                    - config.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8),
                )
    return head


def eval_probe(head: ProbeHead, features: np.ndarray, labels: np.ndarray) -> float:
    """Accuracy (percent) of the head on held-out features."""
    pred = head.predict(np.asarray(features, dtype=np.float64))
    return 100.0 * float(np.mean(pred == np.asarray(labels)))


def labels_for_dimension(records: list[SampleRecord], dimension: str) -> np.ndarray:
    vocab = VOCABULARIES[dimension]
    index = {w: i for i, w in enumerate(vocab)}
    return np.array([index[_true_word(r, dimension)] for r in records], dtype=np.int64)
