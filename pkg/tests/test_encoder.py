import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmadapt.autodiff import ComputeGraph, ShapeError, Tensor, backward, grad_check, no_grad, numeric_gradient, ops
from fmadapt.encoder import PAPER_ENCODER, EncoderConfig, encode, subsampled_length
from fmadapt.model import Model, ModelSpec, count_params


def encoder_model(seed=0, **kw):
    return Model.init(ModelSpec(encoder=EncoderConfig(**kw), decoder=None), seed)


def run(weights, feats, lengths, cfg, **kw):
    with no_grad():
        out, out_len = encode({n: Tensor(v) for n, v in weights.items()}, feats, lengths, cfg, **kw)
    return out.data, out_len


@pytest.mark.parametrize("T,expected", [(16, 4), (1, 1), (7, 2), (8, 2), (9, 3), (100, 25)])
def test_subsampled_length(T, expected):
    assert subsampled_length(T) == expected


@pytest.mark.parametrize("T", [1, 7, 16])
def test_output_shape_and_finite(T):
    m = encoder_model()
    x = np.random.default_rng(T).normal(size=(1, T, 16))
    out, out_len = run(m.weights(), x, [T], m.spec.encoder)
    assert out.shape == (1, subsampled_length(T), m.spec.encoder.output_dim)
    assert list(out_len) == [subsampled_length(T)]
    assert np.all(np.isfinite(out))


def test_zero_initialized_adapters_are_bit_identical_to_no_adapters():
    m = encoder_model(seed=3)
    x = np.random.default_rng(0).normal(size=(2, 13, 16))
    with_ad, _ = run(m.weights(), x, [13, 9], m.spec.encoder)
    without, _ = run(m.weights(), x, [13, 9], m.spec.encoder, use_adapters=False)
    assert np.array_equal(with_ad, without)


def test_trained_adapters_change_the_output():
    m = encoder_model(seed=3)
    W = m.weights()
    W["adapter.block1.up.w"] = np.full_like(W["adapter.block1.up.w"], 0.5)
    x = np.random.default_rng(0).normal(size=(1, 13, 16))
    a, _ = run(W, x, [13], m.spec.encoder)
    b, _ = run(W, x, [13], m.spec.encoder, use_adapters=False)
    assert not np.allclose(a, b)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=2, max_size=4), st.integers(0, 2**16))
def test_padding_does_not_change_per_utterance_output(lengths, seed):
    m = encoder_model(seed=seed % 5)
    rng = np.random.default_rng(seed)
    T = max(lengths)
    x = rng.normal(size=(len(lengths), T, 16))
    for i, n in enumerate(lengths):
        x[i, n:] = rng.normal(size=(T - n, 16)) * 100  # garbage in the padding
    batch, out_len = run(m.weights(), x, lengths, m.spec.encoder)
    for i, n in enumerate(lengths):
        alone, _ = run(m.weights(), x[i:i + 1, :n], [n], m.spec.encoder)
        assert np.max(np.abs(batch[i, : out_len[i]] - alone[0])) < 1e-9
        assert np.all(batch[i, out_len[i]:] == 0.0)


def test_wrong_feature_dim_raises_shape_error():
    m = encoder_model()
    with pytest.raises(ShapeError):
        run(m.weights(), np.zeros((1, 5, 7)), [5], m.spec.encoder)


def test_model_dim_must_divide_heads():
    with pytest.raises(ValueError):
        EncoderConfig(model_dim=10, n_heads=3)


def _grad_graph(seed=7):
    m = encoder_model(seed=seed)
    rng = np.random.default_rng(seed)
    W = m.weights()
    for n in W:
        if n.startswith("adapter.") and ".up." in n:
            W[n] = rng.normal(size=W[n].shape) * 0.3  # non-zero so adapter weights get gradients
    x = rng.normal(size=(2, 9, 16))
    leaves = {n: v for n, v in W.items() if n.startswith(("encoder.", "adapter."))}

    def fn(v):
        out, _ = encode(v, x, [9, 6], m.spec.encoder)
        return ops.mean(ops.mul(out, out))

    return ComputeGraph(fn, leaves), leaves


# The attention key bias adds the same constant to every score of a query row,
# which softmax ignores: its gradient is exactly zero, so relative error would
# only measure finite-difference noise.
KEY_BIAS = ".mhsa.bk"


def test_encoder_gradients_sampled_entries():
    g, leaves = _grad_graph()
    rng = np.random.default_rng(0)
    for leaf, v in leaves.items():
        if leaf.endswith(KEY_BIAS):
            continue
        idx = sorted(set(rng.integers(0, v.size, size=min(v.size, 6)).tolist()))
        assert grad_check(g, leaf, 1e-5, indices=idx) < 1e-4, leaf


def test_attention_key_bias_gradient_is_zero():
    g, leaves = _grad_graph()
    root = g.forward()
    grads = backward(g, root)
    for leaf in leaves:
        if leaf.endswith(KEY_BIAS):
            assert np.max(np.abs(grads[leaf])) < 1e-12
            assert np.max(np.abs(numeric_gradient(g, leaf))) < 1e-8


def _desk_encoder_by_hand(n_mels, D, C, H_mult, K, out_dim, blocks):
    F2 = -(-(-(-n_mels // 2)) // 2)
    H = H_mult * D
    ln = 2 * D
    subsample = (C * 9 + C) + (C * C * 9 + C) + (C * F2 * D + D)
    ffn = ln + D * H + H + H * D + D
    mhsa = ln + 4 * (D * D + D)
    conv = ln + (D * 2 * D + 2 * D) + (K * D + D) + ln + (D * D + D)
    block = 2 * ffn + mhsa + conv + ln
    return subsample + blocks * block + D * out_dim + out_dim


def test_desk_encoder_count_matches_hand_formula():
    cfg = EncoderConfig()
    counts = count_params(ModelSpec(encoder=cfg, decoder=None))
    assert counts["encoder"] == _desk_encoder_by_hand(16, 16, 4, 4, 8, 16, 2) == 13724
    assert counts["adapter"] == 2 * (2 * 16 * 4 + 4 + 16 + 2 * 16) == 360


def test_paper_encoder_and_adapter_counts():
    counts = count_params(ModelSpec(encoder=PAPER_ENCODER, decoder=None))
    assert abs(counts["encoder"] - 606.6e6) <= 0.15 * 606.6e6
    assert counts["adapter"] == 24 * (2 * 1024 * 128 + 128 + 1024 + 2 * 1024)
    assert abs(counts["adapter"] - 6.4e6) <= 0.15 * 6.4e6
