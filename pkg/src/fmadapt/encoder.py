"""Conformer encoder: conv subsampling, Conformer blocks, output projection, residual adapters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, name_scope, ops


@dataclass(frozen=True)
class EncoderConfig:
    n_mels: int = 16
    n_blocks: int = 2
    model_dim: int = 16
    n_heads: int = 2
    ffn_expansion: int = 4
    conv_kernel: int = 8
    subsample_channels: int = 4
    output_dim: int = 16
    adapter_dim: int | None = 4
    subsample_factor: int = 4

    def __post_init__(self):
        if self.model_dim % self.n_heads:
            raise ValueError("model_dim must be divisible by n_heads")
        if self.subsample_factor != 4:
            raise ValueError("subsample_factor is fixed at 4 (10 ms -> 40 ms)")


PAPER_ENCODER = EncoderConfig(
    n_mels=128,
    n_blocks=24,
    model_dim=1024,
    n_heads=8,
    ffn_expansion=4,
    conv_kernel=32,
    subsample_channels=256,
    output_dim=640,
    adapter_dim=128,
)


def _ceil_half(n):
    return -(-n // 2)


def subsampled_length(T: int) -> int:
    return max(1, _ceil_half(_ceil_half(int(T))))


def _ln(prefix, d, group="encoder"):
    return [(f"{prefix}.ln.g", (d,), group, "ones"), (f"{prefix}.ln.b", (d,), group, "zeros")]


def encoder_param_shapes(cfg: EncoderConfig) -> list[tuple[str, tuple, str, str]]:
    """(name, shape, group, init) for every encoder weight, in a fixed order."""
    D, C = cfg.model_dim, cfg.subsample_channels
    F2 = _ceil_half(_ceil_half(cfg.n_mels))
    H = cfg.ffn_expansion * D
    out = [
        ("encoder.subsample.conv1.w", (C, 1, 3, 3), "encoder", "normal"),
        ("encoder.subsample.conv1.b", (C,), "encoder", "zeros"),
        ("encoder.subsample.conv2.w", (C, C, 3, 3), "encoder", "normal"),
        ("encoder.subsample.conv2.b", (C,), "encoder", "zeros"),
        ("encoder.subsample.proj.w", (C * F2, D), "encoder", "normal"),
        ("encoder.subsample.proj.b", (D,), "encoder", "zeros"),
    ]
    for i in range(cfg.n_blocks):
        p = f"encoder.block{i}"
        for ffn in ("ffn1", "ffn2"):
            out += _ln(f"{p}.{ffn}", D)
            out += [
                (f"{p}.{ffn}.w1", (D, H), "encoder", "normal"),
                (f"{p}.{ffn}.b1", (H,), "encoder", "zeros"),
                (f"{p}.{ffn}.w2", (H, D), "encoder", "normal"),
                (f"{p}.{ffn}.b2", (D,), "encoder", "zeros"),
            ]
            if ffn == "ffn1":
                out += _ln(f"{p}.mhsa", D)
                for m in ("q", "k", "v", "o"):
                    out += [(f"{p}.mhsa.w{m}", (D, D), "encoder", "normal"), (f"{p}.mhsa.b{m}", (D,), "encoder", "zeros")]
                out += _ln(f"{p}.conv", D)
                out += [
                    (f"{p}.conv.pw1.w", (D, 2 * D), "encoder", "normal"),
                    (f"{p}.conv.pw1.b", (2 * D,), "encoder", "zeros"),
                    (f"{p}.conv.dw.w", (cfg.conv_kernel, D), "encoder", "normal"),
                    (f"{p}.conv.dw.b", (D,), "encoder", "zeros"),
                ]
                out += _ln(f"{p}.conv.post", D)
                out += [
                    (f"{p}.conv.pw2.w", (D, D), "encoder", "normal"),
                    (f"{p}.conv.pw2.b", (D,), "encoder", "zeros"),
                ]
        out += _ln(f"{p}.out", D)
    out += [
        ("encoder.out.w", (D, cfg.output_dim), "encoder", "normal"),
        ("encoder.out.b", (cfg.output_dim,), "encoder", "zeros"),
    ]
    return out


def adapter_param_shapes(cfg: EncoderConfig) -> list[tuple[str, tuple, str, str]]:
    if not cfg.adapter_dim:
        return []
    D, A = cfg.model_dim, cfg.adapter_dim
    out = []
    for i in range(cfg.n_blocks):
        p = f"adapter.block{i}"
        out += _ln(p, D, "adapter")
        out += [
            (f"{p}.down.w", (D, A), "adapter", "normal"),
            (f"{p}.down.b", (A,), "adapter", "zeros"),
            # zero up-projection: the adapter starts as the identity
            (f"{p}.up.w", (A, D), "adapter", "zeros"),
            (f"{p}.up.b", (D,), "adapter", "zeros"),
        ]
    return out


def sinusoidal_positions(T: int, D: int) -> np.ndarray:
    pos = np.arange(T)[:, None]
    i = np.arange(D // 2)[None, :]
    ang = pos / np.power(10000.0, 2 * i / D)
    pe = np.zeros((T, D))
    pe[:, 0::2] = np.sin(ang)
    pe[:, 1::2] = np.cos(ang)[:, : D - D // 2]
    return pe


def _frame_mask(lengths, T) -> np.ndarray:
    return (np.arange(T)[None, :] < np.asarray(lengths)[:, None]).astype(np.float64)


def _ffn(x, P, p):
    h = ops.layer_norm(x, P[f"{p}.ln.g"], P[f"{p}.ln.b"])
    h = ops.swish(ops.linear(h, P[f"{p}.w1"], P[f"{p}.b1"]))
    return ops.linear(h, P[f"{p}.w2"], P[f"{p}.b2"])


def _mhsa(x, P, p, n_heads, key_mask):
    B, T, D = x.shape
    dh = D // n_heads
    h = ops.layer_norm(x, P[f"{p}.ln.g"], P[f"{p}.ln.b"])

    def heads(m):
        y = ops.linear(h, P[f"{p}.w{m}"], P[f"{p}.b{m}"])
        return ops.transpose(ops.reshape(y, (B, T, n_heads, dh)), (0, 2, 1, 3))

    q, k, v = heads("q"), heads("k"), heads("v")
    scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    pad = np.broadcast_to(~key_mask.astype(bool)[:, None, None, :], scores.shape)
    attn = ops.softmax(ops.masked_fill(scores, pad), axis=-1)
    ctx = ops.reshape(ops.transpose(ops.matmul(attn, v), (0, 2, 1, 3)), (B, T, D))
    return ops.linear(ctx, P[f"{p}.wo"], P[f"{p}.bo"])


def _conv_module(x, P, p, mask3):
    D = x.shape[-1]
    h = ops.layer_norm(x, P[f"{p}.ln.g"], P[f"{p}.ln.b"])
    h = ops.linear(h, P[f"{p}.pw1.w"], P[f"{p}.pw1.b"])
    h = ops.mul(h[:, :, :D], ops.sigmoid(h[:, :, D:]))
    h = ops.mul(h, mask3)  # padded frames must not leak through the depthwise conv
    h = ops.depthwise_conv1d(h, P[f"{p}.dw.w"], P[f"{p}.dw.b"])
    h = ops.layer_norm(h, P[f"{p}.post.ln.g"], P[f"{p}.post.ln.b"])
    h = ops.swish(h)
    return ops.linear(h, P[f"{p}.pw2.w"], P[f"{p}.pw2.b"])


def adapter(x, P, i):
    p = f"adapter.block{i}"
    with name_scope(p):
        h = ops.layer_norm(x, P[f"{p}.ln.g"], P[f"{p}.ln.b"])
        h = ops.relu(ops.linear(h, P[f"{p}.down.w"], P[f"{p}.down.b"]))
        return ops.add(x, ops.linear(h, P[f"{p}.up.w"], P[f"{p}.up.b"]))


def subsample(P, feats, lengths):
    """(B, T, F) features -> (B, T', D) hidden sequence at 40 ms plus lengths."""
    B, T, F = feats.shape
    lengths = np.asarray(lengths, dtype=np.int64)
    with name_scope("encoder.subsample"):
        x = Tensor(np.asarray(feats) * _frame_mask(lengths, T)[:, :, None])
        x = ops.reshape(x, (B, 1, T, F))
        l1 = np.array([_ceil_half(n) for n in lengths])
        x = ops.relu(ops.conv2d(x, P["encoder.subsample.conv1.w"], P["encoder.subsample.conv1.b"]))
        x = ops.mul(x, _frame_mask(l1, x.shape[2])[:, None, :, None])
        l2 = np.array([subsampled_length(n) for n in lengths])
        x = ops.relu(ops.conv2d(x, P["encoder.subsample.conv2.w"], P["encoder.subsample.conv2.b"]))
        x = ops.mul(x, _frame_mask(l2, x.shape[2])[:, None, :, None])
        _, C, T2, F2 = x.shape
        x = ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (B, T2, C * F2))
        x = ops.linear(x, P["encoder.subsample.proj.w"], P["encoder.subsample.proj.b"])
    return x, l2


def encode(P, feats, lengths, cfg: EncoderConfig, use_adapters: bool = True, train_mode: bool = False):
    """Encode a padded batch.

    P maps parameter names to tensors.  ``feats`` is (B, T, n_mels) of
    normalized features, ``lengths`` the valid frame counts.  Returns the
    (B, T', output_dim) encoder output (zero at padded frames) and T' per
    utterance.  ``train_mode`` is accepted for interface symmetry; the desk
    model has no dropout.
    """
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 3 or feats.shape[2] != cfg.n_mels:
        raise ShapeError("encode", "encoder.subsample", [feats.shape], f"expected (B, T, {cfg.n_mels})")
    x, out_len = subsample(P, feats, lengths)
    B, T2, D = x.shape
    mask = _frame_mask(out_len, T2)
    mask3 = mask[:, :, None]
    x = ops.add(x, sinusoidal_positions(T2, D))
    adapters = use_adapters and cfg.adapter_dim and "adapter.block0.down.w" in P
    for i in range(cfg.n_blocks):
        p = f"encoder.block{i}"
        with name_scope(p):
            with name_scope("ffn1"):
                x = ops.add(x, ops.mul(_ffn(x, P, f"{p}.ffn1"), 0.5))
            with name_scope("mhsa"):
                x = ops.add(x, _mhsa(x, P, f"{p}.mhsa", cfg.n_heads, mask))
            with name_scope("conv"):
                x = ops.add(x, _conv_module(x, P, f"{p}.conv", mask3))
            with name_scope("ffn2"):
                x = ops.add(x, ops.mul(_ffn(x, P, f"{p}.ffn2"), 0.5))
            x = ops.layer_norm(x, P[f"{p}.out.ln.g"], P[f"{p}.out.ln.b"])
        if adapters:
            x = adapter(x, P, i)
    with name_scope("encoder.out"):
        x = ops.linear(x, P["encoder.out.w"], P["encoder.out.b"])
        x = ops.mul(x, mask3)
    return x, out_len
