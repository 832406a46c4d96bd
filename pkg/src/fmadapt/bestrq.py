"""Random-projection quantizer targets and the masked-prediction objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, name_scope, ops
from .encoder import subsampled_length
from .rng import generator


@dataclass(frozen=True)
class QuantizerConfig:
    codebook_size: int = 64
    proj_dim: int = 16
    normalize: bool = True  # L2-normalize projected frames and codebook rows


@dataclass(frozen=True)
class RandomQuantizer:
    projection: np.ndarray  # (d_feat, d_proj)
    codebook: np.ndarray  # (V, d_proj)
    normalize: bool = True

    @property
    def size(self) -> int:
        return self.codebook.shape[0]

    @property
    def d_feat(self) -> int:
        return self.projection.shape[0]


def make_quantizer(d_feat: int, cfg: QuantizerConfig, seed: int) -> RandomQuantizer:
    rng = generator(seed, "quantizer")
    proj = rng.standard_normal((d_feat, cfg.proj_dim))
    book = rng.standard_normal((cfg.codebook_size, cfg.proj_dim))
    if cfg.normalize:
        book = book / np.linalg.norm(book, axis=1, keepdims=True)
    return RandomQuantizer(proj, book, cfg.normalize)


def quantize(features: np.ndarray, q: RandomQuantizer) -> np.ndarray:
    """Nearest-codeword label per frame; ties go to the smallest index."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != q.d_feat:
        raise ValueError(f"features must be (T, {q.d_feat}), got {features.shape}")
    z = features @ q.projection
    if q.normalize:
        norm = np.linalg.norm(z, axis=1, keepdims=True)
        z = z / np.where(norm > 0, norm, 1.0)
    d = ((z[:, None, :] - q.codebook[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(d, axis=1).astype(np.int64)  # argmin returns the first minimum


@dataclass(frozen=True)
class MaskSpec:
    mask_prob: float = 0.01
    span_frames: int = 4
    noise_std: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError("mask_prob must be in [0, 1]")
        if self.span_frames < 1:
            raise ValueError("span_frames must be >= 1")


def mask_frames(T: int, spec: MaskSpec, rng: np.random.Generator) -> np.ndarray:
    starts = rng.random(T) < spec.mask_prob
    mask = np.zeros(T, dtype=bool)
    for t in np.flatnonzero(starts):
        mask[t: t + spec.span_frames] = True
    return mask


def apply_mask(features: np.ndarray, spec: MaskSpec, rng_seed: int):
    """Mask spans of frames with fresh noise.

    Draw order: T uniforms decide span starts, then one noise row per masked
    frame in time order.  Returns (masked features, bool mask).
    """
    features = np.asarray(features, dtype=np.float64)
    rng = generator(rng_seed)
    mask = mask_frames(features.shape[0], spec, rng)
    out = features.copy()
    n = int(mask.sum())
    if n:
        out[mask] = rng.normal(0.0, spec.noise_std, size=(n, features.shape[1]))
    return out, mask


def downsample_targets(labels: np.ndarray, mask: np.ndarray, factor: int = 4):
    """10 ms labels/mask -> 40 ms: majority vote per window (ties -> earliest), mask by any."""
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    T = len(labels)
    T2 = subsampled_length(T)
    out_l = np.zeros(T2, dtype=np.int64)
    out_m = np.zeros(T2, dtype=bool)
    for j in range(T2):
        win = labels[j * factor:(j + 1) * factor]
        if len(win) == 0:
            continue
        vals, first, counts = np.unique(win, return_index=True, return_counts=True)
        best = max(range(len(vals)), key=lambda i: (counts[i], -first[i]))
        out_l[j] = vals[best]
        out_m[j] = bool(mask[j * factor:(j + 1) * factor].any())
    return out_l, out_m


def head_logits(P, enc: Tensor) -> Tensor:
    with name_scope("bestrq.head"):
        return ops.linear(enc, P["bestrq.head.w"], P["bestrq.head.b"])


def bestrq_loss(logits, labels, mask) -> Tensor:
    """Mean cross-entropy over masked positions; 0 (with zero gradient) if none are masked.

    ``logits`` is (..., V) and ``labels``/``mask`` match its leading dims.
    """
    logits = logits if isinstance(logits, Tensor) else Tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    m = np.asarray(mask, dtype=np.float64)
    lp = ops.log_softmax(logits, axis=-1)
    nll = ops.neg(ops.reshape(ops.take_along_axis(lp, labels[..., None], axis=-1), labels.shape))
    return ops.masked_mean(nll, m)


def codebook_utilization(labels, V: int) -> tuple[float, float]:
    labels = np.asarray(labels).ravel()
    if labels.size == 0:
        raise ValueError("labels must be nonempty")
    counts = np.bincount(labels, minlength=V)
    p = counts[counts > 0] / labels.size
    frac = float(np.count_nonzero(counts)) / V
    if V == 1:
        return frac, 0.0
    ent = float(-(p * np.log(p)).sum())
    return frac, max(0.0, ent / np.log(V))
