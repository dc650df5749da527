"""Trainable point-cloud encoder with hand-written exact gradients.

A fixed permutation-invariant architecture: a shared per-point network
(3 -> 64 -> 128, rectifier activations), coordinate-wise max pooling over
points, a pooled head (128 -> 128 -> D), and L2 normalisation.  Parameters
are stored as float32 (the checkpoint payload type); all arithmetic runs in
float64 so analytic gradients survive finite-difference comparison.

Max-pool gradients route to the lowest point index on ties; the
normalisation Jacobian is differentiated exactly.  ``linear=True`` disables
the rectifiers (identity activations) for gradient-check diagnostics.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .sensor import SensorSpec

HIDDEN1 = 64
HIDDEN2 = 128
HEAD_HIDDEN = 128

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4", "log_tau")

TAU_MIN = 0.01
TAU_MAX = 1.0
TAU_INIT = 0.07


@dataclass
class EncoderParams:
    """All tensors of the encoder plus the learnable log-temperature."""

    w1: np.ndarray  # (3, 64)
    b1: np.ndarray  # (64,)
    w2: np.ndarray  # (64, 128)
    b2: np.ndarray  # (128,)
    w3: np.ndarray  # (128, 128)
    b3: np.ndarray  # (128,)
    w4: np.ndarray  # (128, D)
    b4: np.ndarray  # (D,)
    log_tau: np.ndarray  # scalar, shape ()

    @property
    def dim(self) -> int:
        return self.w4.shape[1]

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau))

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "EncoderParams":
        return EncoderParams(**{k: v.copy() for k, v in self.tensors().items()})

    def astype64(self) -> "EncoderParams":
        return EncoderParams(
            **{k: v.astype(np.float64, copy=False) for k, v in self.tensors().items()}
        )


def init_params(seed: int, dim: int) -> EncoderParams:
    """Fan-in-scaled Gaussian initialisation; log-temperature at ln(0.07)."""
    if dim < 8:
        raise ValueError("embedding dim must be at least 8")
    rng = np.random.default_rng(seed)

    def layer(fan_in, fan_out):
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        return w.astype(np.float32), np.zeros(fan_out, dtype=np.float32)

    w1, b1 = layer(3, HIDDEN1)
    w2, b2 = layer(HIDDEN1, HIDDEN2)
    w3, b3 = layer(HIDDEN2, HEAD_HIDDEN)
    w4, b4 = layer(HEAD_HIDDEN, dim)
    log_tau = np.array(math.log(TAU_INIT), dtype=np.float32)
    return EncoderParams(w1, b1, w2, b2, w3, b3, w4, b4, log_tau)


def zero_gradients(params: EncoderParams) -> dict[str, np.ndarray]:
    return {k: np.zeros(v.shape, dtype=np.float64) for k, v in params.tensors().items()}


def normalize_cloud(points: np.ndarray, sensor: SensorSpec) -> np.ndarray:
    """Map sensor-frame mm coordinates into the unit cube centred at zero.

    x and y span [-0.5, 0.5] across the pad; z spans [-0.5, 0.5] across the
    indentation range.  Centred inputs keep the rectifier units responsive
    on both sides at initialisation.
    """
    p = np.asarray(points, dtype=np.float64)
    out = np.empty_like(p)
    out[..., 0] = p[..., 0] / sensor.width_mm
    out[..., 1] = p[..., 1] / sensor.height_mm
    out[..., 2] = p[..., 2] / sensor.max_depth_mm - 0.5
    return out


@dataclass
class ForwardTrace:
    """Cached activations sufficient for the exact backward pass."""

    points: np.ndarray  # (B, N, 3) normalised input
    a1: np.ndarray  # (B, N, 64) post-rectifier
    a2: np.ndarray  # (B, N, 128) post-rectifier
    pool_idx: np.ndarray  # (B, 128) argmax point per channel (lowest on ties)
    pooled: np.ndarray  # (B, 128)
    a3: np.ndarray  # (B, 128) post-rectifier head hidden
    pre_norm: np.ndarray  # (B, D)
    embedding: np.ndarray  # (B, D) unit rows
    linear: bool


def encode_batch(
    params: EncoderParams, points: np.ndarray, linear: bool = False
) -> tuple[np.ndarray, ForwardTrace]:
    """Encode a (B, N, 3) batch of normalised clouds to unit-norm rows.

    Arithmetic runs in the parameters' dtype: float32 for stored/training
    parameters, float64 when the caller passes an ``astype64`` view (the
    gradient-check paths).
    """
    p = params
    x = np.asarray(points, dtype=p.w1.dtype)
    if x.ndim != 3 or x.shape[-1] != 3:
        raise ValueError("expected points of shape (B, N, 3)")
    if x.shape[1] == 0:
        raise ValueError("cloud must contain at least one point")

    def act(z):
        return z if linear else np.maximum(z, 0.0)

    a1 = act(x @ p.w1 + p.b1)
    a2 = act(a1 @ p.w2 + p.b2)
    pool_idx = np.argmax(a2, axis=1)  # first max = lowest point index
    pooled = np.take_along_axis(a2, pool_idx[:, None, :], axis=1)[:, 0, :]
    a3 = act(pooled @ p.w3 + p.b3)
    pre = a3 @ p.w4 + p.b4
    norms = np.linalg.norm(pre, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ValueError("encoder produced a zero pre-normalisation vector")
    emb = pre / norms
    trace = ForwardTrace(
        points=x, a1=a1, a2=a2, pool_idx=pool_idx, pooled=pooled,
        a3=a3, pre_norm=pre, embedding=emb, linear=linear,
    )
    return emb, trace


def encode(
    params: EncoderParams, cloud: np.ndarray, linear: bool = False
) -> tuple[np.ndarray, ForwardTrace]:
    """Encode one (N, 3) normalised cloud to a unit-norm D-vector."""
    c = np.asarray(cloud, dtype=np.float64)
    if c.ndim != 2 or c.shape[-1] != 3:
        raise ValueError("expected a cloud of shape (N, 3)")
    emb, trace = encode_batch(params, c[None], linear=linear)
    return emb[0], trace


def backward_batch(
    trace: ForwardTrace, params: EncoderParams, grad_out: np.ndarray
) -> dict[str, np.ndarray]:
    """Exact gradients of sum_b <grad_out[b], embedding[b]> w.r.t. all tensors.

    ``log_tau`` receives a zero entry; temperature gradients flow through
    the loss, not the encoder.
    """
    p = params
    g = np.asarray(grad_out, dtype=p.w1.dtype)
    if g.shape != trace.embedding.shape:
        raise ValueError(
            f"grad_out shape {g.shape} does not match embeddings {trace.embedding.shape}"
        )

    def mask(a):
        return 1.0 if trace.linear else (a > 0.0)

    norms = np.linalg.norm(trace.pre_norm, axis=1, keepdims=True)
    f = trace.embedding
    d_pre = (g - np.sum(g * f, axis=1, keepdims=True) * f) / norms

    grads = zero_gradients(params)
    grads["w4"] = trace.a3.T @ d_pre
    grads["b4"] = d_pre.sum(axis=0)
    d_a3 = d_pre @ p.w4.T
    d_z3 = d_a3 * mask(trace.a3)
    grads["w3"] = trace.pooled.T @ d_z3
    grads["b3"] = d_z3.sum(axis=0)
    d_pool = d_z3 @ p.w3.T

    d_a2 = np.zeros_like(trace.a2)
    np.put_along_axis(d_a2, trace.pool_idx[:, None, :], d_pool[:, None, :], axis=1)
    d_z2 = d_a2 * mask(trace.a2)

    bn = trace.points.shape[0] * trace.points.shape[1]
    a1_flat = trace.a1.reshape(bn, -1)
    z2_flat = d_z2.reshape(bn, -1)
    grads["w2"] = a1_flat.T @ z2_flat
    grads["b2"] = z2_flat.sum(axis=0)
    d_a1 = d_z2 @ p.w2.T
    d_z1 = d_a1 * mask(trace.a1)
    x_flat = trace.points.reshape(bn, -1)
    z1_flat = d_z1.reshape(bn, -1)
    grads["w1"] = x_flat.T @ z1_flat
    grads["b1"] = z1_flat.sum(axis=0)
    return grads


def backward(
    trace: ForwardTrace, params: EncoderParams, grad_out: np.ndarray
) -> dict[str, np.ndarray]:
    """Single-cloud wrapper over :func:`backward_batch`."""
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[None]
    return backward_batch(trace, params, g)


def gradient_check(
    params: EncoderParams,
    cloud: np.ndarray,
    probe_vector: np.ndarray,
    eps: float = 1e-4,
    linear: bool = False,
) -> float:
    """Worst per-tensor relative error of analytic vs central differences.

    The probed scalar is <embedding, probe>; the comparison runs entirely in
    float64 copies of the parameters.  Per tensor the metric is
    ``max|analytic - fd| / max(max|analytic|, max|fd|, 1e-12)``, the usual
    scale-relative gradient check.

    The network is piecewise smooth: where a perturbation of +-eps flips a
    rectifier gate or a pooling argmax, the central difference straddles a
    kink and stops measuring the gradient, so such coordinates are skipped
    (their gradients are still covered through every other coordinate).
    """
    p64 = params.copy().astype64()
    probe = np.asarray(probe_vector, dtype=np.float64)
    x = np.asarray(cloud, dtype=np.float64)
    _, trace = encode(p64, x, linear=linear)
    analytic = backward(trace, p64, probe)

    def scalar() -> tuple[float, tuple]:
        a1 = x @ p64.w1 + p64.b1
        if not linear:
            a1 = np.maximum(a1, 0.0)
        a2 = a1 @ p64.w2 + p64.b2
        if not linear:
            a2 = np.maximum(a2, 0.0)
        idx = np.argmax(a2, axis=0)
        pooled = a2[idx, np.arange(a2.shape[1])]
        a3 = pooled @ p64.w3 + p64.b3
        if not linear:
            a3 = np.maximum(a3, 0.0)
        pre = a3 @ p64.w4 + p64.b4
        signature = ((a1 > 0).tobytes(), (a2 > 0).tobytes(), idx.tobytes(),
                     (a3 > 0).tobytes())
        return float(pre @ probe / np.linalg.norm(pre)), signature

    _, base_sig = scalar()
    worst = 0.0
    for name in PARAM_NAMES:
        if name == "log_tau":
            continue
        flat = getattr(p64, name).reshape(-1)
        a_flat = analytic[name].reshape(-1)
        fd_list = []
        an_list = []
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi, sig_hi = scalar()
            flat[i] = orig - eps
            lo, sig_lo = scalar()
            flat[i] = orig
            if sig_hi != base_sig or sig_lo != base_sig:
                continue
            fd_list.append((hi - lo) / (2.0 * eps))
            an_list.append(a_flat[i])
        fd_arr = np.array(fd_list)
        an_arr = np.array(an_list)
        scale = max(np.max(np.abs(an_arr)), np.max(np.abs(fd_arr)), 1e-12)
        worst = max(worst, float(np.max(np.abs(an_arr - fd_arr))) / scale)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint I/O
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"TCLC"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: EncoderParams, path) -> None:
    """Write all tensors (float32 payload, little-endian) to *path*."""
    tensors = params.tensors()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(tensors)))
        for name, tensor in tensors.items():
            raw = name.encode("ascii")
            arr = np.asarray(tensor, dtype="<f4")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.tobytes())


_EXPECTED_SHAPES = {
    "w1": (3, HIDDEN1), "b1": (HIDDEN1,),
    "w2": (HIDDEN1, HIDDEN2), "b2": (HIDDEN2,),
    "w3": (HIDDEN2, HEAD_HIDDEN), "b3": (HEAD_HIDDEN,),
    "b4": None, "w4": None, "log_tau": (),
}


def load_checkpoint(path, expect_dim: int | None = None) -> EncoderParams:
    """Read a checkpoint; raises :class:`FormatError` on any inconsistency."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic: {data[:4]!r}")
    if len(data) < 12:
        raise FormatError("checkpoint header truncated")
    version, count = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    offset = 12
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 2 > len(data):
            raise FormatError("checkpoint truncated in tensor header")
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + name_len + 1 > len(data):
            raise FormatError("checkpoint truncated in tensor name")
        name = data[offset : offset + name_len].decode("ascii")
        offset += name_len
        (rank,) = struct.unpack_from("<B", data, offset)
        offset += 1
        if offset + 4 * rank > len(data):
            raise FormatError("checkpoint truncated in tensor dims")
        dims = struct.unpack_from(f"<{rank}I", data, offset) if rank else ()
        offset += 4 * rank
        n_items = int(np.prod(dims)) if rank else 1
        if offset + 4 * n_items > len(data):
            raise FormatError("checkpoint truncated in tensor payload")
        arr = np.frombuffer(data, dtype="<f4", count=n_items, offset=offset)
        offset += 4 * n_items
        tensors[name] = arr.reshape(dims).astype(np.float32)
    if offset != len(data):
        raise FormatError("trailing bytes after final tensor")
    missing = set(PARAM_NAMES) - set(tensors)
    if missing:
        raise FormatError(f"checkpoint missing tensors: {sorted(missing)}")
    for name, expected in _EXPECTED_SHAPES.items():
        if expected is not None and tensors[name].shape != expected:
            raise FormatError(
                f"tensor {name} has shape {tensors[name].shape}, expected {expected}"
            )
    if tensors["w4"].shape[0] != HEAD_HIDDEN or tensors["w4"].ndim != 2:
        raise FormatError(f"tensor w4 has shape {tensors['w4'].shape}")
    if tensors["b4"].shape != (tensors["w4"].shape[1],):
        raise FormatError("b4 dimension does not match w4")
    params = EncoderParams(**{name: tensors[name] for name in PARAM_NAMES})
    if expect_dim is not None and params.dim != expect_dim:
        raise FormatError(
            f"checkpoint dimension {params.dim} does not match configured {expect_dim}"
        )
    return params
