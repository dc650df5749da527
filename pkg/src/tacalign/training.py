"""Contrastive alignment training of the tactile encoder.

The objective is a symmetric temperature-scaled cross-entropy over the
pairwise similarity matrix of a batch: matched (tactile, target) pairs sit
on the diagonal and both the row-wise and column-wise softmax terms are
averaged (division by 2B keeps the loss scale batch-size independent
without moving the minimiser).  Two such terms are summed - one against
frozen text embeddings and one against frozen image embeddings - and only
the tactile encoder plus the log-temperature receive gradients.

The optimiser is Adam with the conventional defaults; the temperature is
clamped into [0.01, 1.0] after every step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .encoder import (
    PARAM_NAMES,
    TAU_MAX,
    TAU_MIN,
    EncoderParams,
    backward_batch,
    encode_batch,
    init_params,
    zero_gradients,
)
from .sensor import DEFAULT_POINT_COUNT, SensorSpec


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 30
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    dim: int = 64
    image_loss: bool = True
    # label-preserving per-epoch cloud augmentation: resample points with
    # replacement and add small coordinate jitter (the patch never moves,
    # so stored labels remain exact)
    epoch_resample: bool = True
    resample_jitter: float = 0.01  # in normalised-cube units

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be non-negative")


@dataclass
class LossBreakdown:
    l_t2l: float
    l_t2i: float
    tau: float

    @property
    def total(self) -> float:
        return self.l_t2l + self.l_t2i


@dataclass
class BatchTriplet:
    """One training batch: clouds plus their frozen target embeddings."""

    ids: list[str]
    clouds: np.ndarray  # (B, N, 3) normalised
    text_embeddings: np.ndarray  # (B, D)
    image_embeddings: np.ndarray  # (B, D)

    def __post_init__(self) -> None:
        b = len(self.ids)
        if not (self.clouds.shape[0] == self.text_embeddings.shape[0]
                == self.image_embeddings.shape[0] == b):
            raise ValueError("batch members must share one count")


# ---------------------------------------------------------------------------
# Contrastive loss
# ---------------------------------------------------------------------------

def _log_softmax(s: np.ndarray, axis: int) -> np.ndarray:
    shifted = s - s.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def contrastive_loss(
    f_a: np.ndarray, f_b: np.ndarray, tau: float
) -> tuple[float, np.ndarray, float]:
    """Symmetric diagonal-positive cross-entropy between unit-row matrices.

    Returns ``(loss, dL/dF_A, dL/dlog tau)``.  *f_b* is a frozen target: no
    gradient is produced for it.
    """
    a = np.asarray(f_a, dtype=np.float64)
    b = np.asarray(f_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError("expected two (B, D) matrices of equal shape")
    n = a.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite embedding input")
    if not TAU_MIN <= tau <= TAU_MAX:
        raise ValueError(f"tau {tau} outside [{TAU_MIN}, {TAU_MAX}]")

    s = (a @ b.T) / tau
    log_p_rows = _log_softmax(s, axis=1)
    log_p_cols = _log_softmax(s, axis=0)
    diag = np.arange(n)
    loss = -(log_p_rows[diag, diag].sum() + log_p_cols[diag, diag].sum()) / (2.0 * n)

    p_rows = np.exp(log_p_rows)
    p_cols = np.exp(log_p_cols)
    eye = np.eye(n)
    d_s = (p_rows + p_cols - 2.0 * eye) / (2.0 * n)
    grad_a = d_s @ b / tau
    grad_log_tau = float(np.sum(d_s * (-s)))
    return float(loss), grad_a, grad_log_tau


def total_loss(
    batch: BatchTriplet,
    params: EncoderParams,
    image_loss: bool = True,
) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Loss of one batch plus exact gradients for every encoder tensor."""
    tau = params.tau
    f_t, trace = encode_batch(params, batch.clouds)

    l_t2l, grad_t_text, g_tau_text = contrastive_loss(f_t, batch.text_embeddings, tau)
    if image_loss:
        l_t2i, grad_t_img, g_tau_img = contrastive_loss(
            f_t, batch.image_embeddings, tau
        )
    else:
        l_t2i, grad_t_img, g_tau_img = 0.0, np.zeros_like(grad_t_text), 0.0

    grads = backward_batch(trace, params, grad_t_text + grad_t_img)
    grads["log_tau"] = np.array(g_tau_text + g_tau_img, dtype=np.float64)
    return LossBreakdown(l_t2l=l_t2l, l_t2i=l_t2i, tau=tau), grads


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

def augment_cloud(
    cloud: np.ndarray,
    rng: np.random.Generator,
    sensor: SensorSpec,
    n_points: int = DEFAULT_POINT_COUNT,
    translate: bool = True,
    rotate: bool = True,
    jitter: bool = True,
    translate_range_mm: float = 2.0,
    jitter_sigma_mm: float = 0.02,
) -> np.ndarray:
    """Resample-with-replacement to *n_points*, then optionally translate
    in-plane (clipped so every point stays on the pad), rotate about the
    sensor normal, and add per-point Gaussian jitter.

    In-plane moves displace the cloud without touching its source field, so
    position labels derived from the field are only valid for clouds
    augmented with ``translate=False, rotate=False``.
    """
    pts = np.asarray(cloud, dtype=np.float64)
    idx = rng.choice(pts.shape[0], size=n_points, replace=True)
    out = pts[idx].copy()

    hx = 0.5 * sensor.width_mm
    hy = 0.5 * sensor.height_mm

    if translate:
        dx = rng.uniform(-translate_range_mm, translate_range_mm)
        dy = rng.uniform(-translate_range_mm, translate_range_mm)
        dx = np.clip(dx, -hx - out[:, 0].min(), hx - out[:, 0].max())
        dy = np.clip(dy, -hy - out[:, 1].min(), hy - out[:, 1].max())
        out[:, 0] += dx
        out[:, 1] += dy
    if rotate:
        ang = rng.uniform(-np.pi, np.pi)
        c, s = np.cos(ang), np.sin(ang)
        x = out[:, 0] * c - out[:, 1] * s
        y = out[:, 0] * s + out[:, 1] * c
        out[:, 0] = np.clip(x, -hx, hx)
        out[:, 1] = np.clip(y, -hy, hy)
    if jitter:
        out += rng.normal(0.0, jitter_sigma_mm, size=out.shape)
        out[:, 0] = np.clip(out[:, 0], -hx, hx)
        out[:, 1] = np.clip(out[:, 1], -hy, hy)
        out[:, 2] = np.clip(out[:, 2], 0.0, sensor.max_depth_mm)
    return out


# ---------------------------------------------------------------------------
# Optimiser
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: EncoderParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> None:
    """One in-place moment-based adaptive update; clamps the temperature."""
    if not state.m:
        state.m = zero_gradients(params)
        state.v = zero_gradients(params)
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    for name in PARAM_NAMES:
        g = np.asarray(grads[name], dtype=np.float64)
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / (1.0 - b1**t)
        v_hat = state.v[name] / (1.0 - b2**t)
        tensor = getattr(params, name)
        update = tensor.astype(np.float64) - config.learning_rate * m_hat / (
            np.sqrt(v_hat) + config.adam_epsilon
        )
        setattr(params, name, update.astype(np.float32))
    params.log_tau = np.clip(
        params.log_tau, np.float32(np.log(TAU_MIN)), np.float32(np.log(TAU_MAX))
    )


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    l_t2l: float
    l_t2i: float
    total: float
    tau: float


class TripletDataset:
    """In-memory training set: ids, normalised clouds, frozen targets."""

    def __init__(
        self,
        ids: list[str],
        clouds: np.ndarray,
        text_embeddings: np.ndarray,
        image_embeddings: np.ndarray,
    ) -> None:
        n = len(ids)
        if not (clouds.shape[0] == text_embeddings.shape[0]
                == image_embeddings.shape[0] == n):
            raise ValueError("dataset members must share one count")
        self.ids = list(ids)
        # float32 clouds keep the training path in single precision
        self.clouds = np.asarray(clouds, dtype=np.float32)
        self.text_embeddings = np.asarray(text_embeddings, dtype=np.float64)
        self.image_embeddings = np.asarray(image_embeddings, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.ids)


def train(
    dataset: TripletDataset,
    config: TrainConfig,
    initial: EncoderParams | None = None,
) -> tuple[EncoderParams, list[EpochRecord]]:
    """Fit the encoder; returns final parameters and the per-epoch loss curve.

    Batches are full-size only (a trailing remainder smaller than the batch
    is dropped, keeping the loss scale comparable across epochs); shuffling
    is seeded and the whole run is deterministic.
    """
    n = len(dataset)
    if n < config.batch_size:
        raise ValueError(
            f"dataset has {n} triplets; need at least batch_size={config.batch_size}"
        )
    params = initial.copy() if initial is not None else init_params(config.seed, config.dim)
    if params.dim != dataset.text_embeddings.shape[1]:
        raise ValueError(
            f"encoder dim {params.dim} does not match embeddings "
            f"{dataset.text_embeddings.shape[1]}"
        )
    state = AdamState()
    rng = np.random.default_rng(config.seed)
    records: list[EpochRecord] = []

    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        sums = np.zeros(3)
        tau_sum = 0.0
        n_batches = 0
        for start in range(0, n - config.batch_size + 1, config.batch_size):
            idx = perm[start : start + config.batch_size]
            clouds = dataset.clouds[idx]
            if config.epoch_resample:
                b, n_pts, _ = clouds.shape
                draw = rng.integers(0, n_pts, size=(b, n_pts))
                clouds = np.take_along_axis(clouds, draw[:, :, None], axis=1)
                if config.resample_jitter > 0.0:
                    clouds = clouds + rng.normal(
                        0.0, config.resample_jitter, size=clouds.shape
                    ).astype(np.float32)
            batch = BatchTriplet(
                ids=[dataset.ids[i] for i in idx],
                clouds=clouds,
                text_embeddings=dataset.text_embeddings[idx],
                image_embeddings=dataset.image_embeddings[idx],
            )
            breakdown, grads = total_loss(batch, params, image_loss=config.image_loss)
            adam_step(params, grads, state, config)
            sums += (breakdown.l_t2l, breakdown.l_t2i, breakdown.total)
            tau_sum += breakdown.tau
            n_batches += 1
        records.append(
            EpochRecord(
                epoch=epoch,
                l_t2l=sums[0] / n_batches,
                l_t2i=sums[1] / n_batches,
                total=sums[2] / n_batches,
                tau=tau_sum / n_batches,
            )
        )
    return params, records


def write_loss_curve(path, records: list[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "l_t2l", "l_t2i", "total", "tau"])
        for r in records:
            writer.writerow([r.epoch, repr(r.l_t2l), repr(r.l_t2i), repr(r.total), repr(r.tau)])


# ---------------------------------------------------------------------------
# Full-objective gradient check
# ---------------------------------------------------------------------------

def _loss_only(batch: BatchTriplet, params: EncoderParams, image_loss: bool) -> float:
    tau = params.tau
    f_t, _ = encode_batch(params, batch.clouds)
    value = contrastive_loss(f_t, batch.text_embeddings, tau)[0]
    if image_loss:
        value += contrastive_loss(f_t, batch.image_embeddings, tau)[0]
    return value


def full_gradient_check(
    batch: BatchTriplet,
    params: EncoderParams,
    eps: float = 1e-5,
    image_loss: bool = True,
) -> float:
    """Worst per-tensor relative error of the analytic total-loss gradient
    against central finite differences over every parameter (log tau
    included).

    The default step is smaller than the encoder probe's: the loss surface
    has rectifier and pooling kinks, and a wide central difference that
    straddles one reports a spurious error even when the analytic gradient
    is exact.
    """
    p64 = params.copy().astype64()
    _, analytic = total_loss(batch, p64, image_loss=image_loss)

    def loss_value() -> float:
        return _loss_only(batch, p64, image_loss)

    worst = 0.0
    for name in PARAM_NAMES:
        tensor = getattr(p64, name)
        flat = tensor.reshape(-1) if tensor.ndim else tensor.reshape(1)
        a_flat = np.atleast_1d(analytic[name]).reshape(-1)
        fd_flat = np.empty_like(a_flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_value()
            flat[i] = orig - eps
            lo = loss_value()
            flat[i] = orig
            fd_flat[i] = (hi - lo) / (2.0 * eps)
        scale = max(np.max(np.abs(a_flat)), np.max(np.abs(fd_flat)), 1e-12)
        worst = max(worst, float(np.max(np.abs(a_flat - fd_flat))) / scale)
    return worst
