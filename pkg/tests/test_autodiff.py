import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fmadapt.autodiff import (
    ComputeGraph,
    Parameter,
    ShapeError,
    Tensor,
    backward,
    forward,
    grad_check,
    name_scope,
    ops,
)
from fmadapt.autodiff import checkpoint


def test_forward_square():
    g = ComputeGraph(lambda v: v["x"] * v["x"], {"x": np.array(3.0)})
    assert forward(g).item() == 9.0
    assert backward(g)["x"] == pytest.approx(6.0)


def test_softmax_symmetric():
    out = ops.softmax(Tensor([0.0, 0.0]))
    np.testing.assert_array_equal(out.data, [0.5, 0.5])


def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((a @ Tensor(np.eye(2))).data, a.data)


def test_sum_softmax_gradient_is_zero():
    rng = np.random.default_rng(0)
    g = ComputeGraph(lambda v: ops.sum(ops.softmax(v["v"])), {"v": rng.normal(size=5)})
    forward(g)
    np.testing.assert_allclose(backward(g)["v"], 0.0, atol=1e-15)


def _central(f, x, h=1e-5):
    out = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        out.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return out


def test_cross_entropy_gradient_matches_central_differences():
    logits = np.array([1.0, -1.0])

    def ce(z):
        return -(z[0] - np.log(np.exp(z).sum()))

    numeric = _central(ce, logits)
    g = ComputeGraph(lambda v: -ops.log_softmax(v["z"])[0], {"z": logits})
    forward(g)
    analytic = backward(g)["z"]
    np.testing.assert_allclose(analytic, numeric, rtol=1e-6)


def test_non_scalar_root_rejected():
    g = ComputeGraph(lambda v: v["x"] * 2.0, {"x": np.ones(3)})
    forward(g)
    with pytest.raises(ValueError):
        backward(g)


def test_frozen_leaf_absent_from_gradients():
    frozen = Parameter("q.w", np.ones(2), group="quantizer")
    live = Parameter("e.w", np.ones(2), group="encoder")
    g = ComputeGraph(lambda v: ops.sum(v["q"] * v["e"]), {"q": frozen, "e": live})
    forward(g)
    assert set(backward(g)) == {"e"}


def test_quadratic_form_grad_check():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(3, 3))
    g = ComputeGraph(lambda v: ops.sum(v["x"] * (Tensor(A) @ v["x"].reshape(3, 1)).reshape(3)), {"x": rng.normal(size=3)})
    assert grad_check(g, "x", 1e-5) < 1e-6


def test_linear_grad_check_is_exact():
    g = ComputeGraph(lambda v: ops.sum(v["x"] * np.array([1.0, -2.0, 0.5])), {"x": np.array([0.3, 0.1, -4.0])})
    assert grad_check(g, "x", 1e-5) < 1e-10


def test_shape_error_names_scope():
    def fn(v):
        with name_scope("encoder.block3"), name_scope("ffn1"):
            return ops.sum(v["a"] @ v["b"])

    g = ComputeGraph(fn, {"a": np.ones((2, 3)), "b": np.ones((2, 3))})
    with pytest.raises(ShapeError) as err:
        forward(g)
    assert err.value.scope == "encoder.block3.ffn1"
    assert err.value.op == "matmul"


# ---- every registered differentiable op, random small inputs

RNG = np.random.default_rng(1234)


def _cases():
    x23 = RNG.normal(size=(2, 3))
    pos23 = RNG.uniform(0.5, 2.0, size=(2, 3))
    return {
        "add": (lambda v: ops.add(v["a"], v["b"]), {"a": x23, "b": RNG.normal(size=(3,))}),
        "sub": (lambda v: ops.sub(v["a"], v["b"]), {"a": x23, "b": RNG.normal(size=(2, 1))}),
        "mul": (lambda v: ops.mul(v["a"], v["b"]), {"a": x23, "b": RNG.normal(size=(2, 3))}),
        "div": (lambda v: ops.div(v["a"], v["b"]), {"a": x23, "b": pos23}),
        "neg": (lambda v: ops.neg(v["a"]), {"a": x23}),
        "exp": (lambda v: ops.exp(v["a"]), {"a": x23}),
        "log": (lambda v: ops.log(v["a"]), {"a": pos23}),
        "sqrt": (lambda v: ops.sqrt(v["a"]), {"a": pos23}),
        "square": (lambda v: ops.square(v["a"]), {"a": x23}),
        "tanh": (lambda v: ops.tanh(v["a"]), {"a": x23}),
        "sigmoid": (lambda v: ops.sigmoid(v["a"]), {"a": x23}),
        "relu": (lambda v: ops.relu(v["a"]), {"a": np.array([[0.5, -0.7, 1.2], [-0.3, 0.9, -2.0]])}),
        "swish": (lambda v: ops.swish(v["a"]), {"a": x23}),
        "masked_fill": (lambda v: ops.masked_fill(v["a"], np.array([[True, False, False], [False, True, False]]), 0.0), {"a": x23}),
        "matmul": (lambda v: ops.matmul(v["a"], v["b"]), {"a": RNG.normal(size=(2, 2, 3)), "b": RNG.normal(size=(3, 4))}),
        "sum": (lambda v: ops.sum(v["a"], axis=1, keepdims=True), {"a": x23}),
        "mean": (lambda v: ops.mean(v["a"], axis=0), {"a": x23}),
        "masked_sum": (lambda v: ops.masked_sum(v["a"], np.array([1.0, 0.0, 1.0]), axis=1), {"a": x23}),
        "masked_mean": (lambda v: ops.masked_mean(v["a"], np.array([[1.0, 0.0, 1.0], [0, 0, 1]]), axis=1), {"a": x23}),
        "logsumexp": (lambda v: ops.logsumexp(v["a"], axis=-1), {"a": x23}),
        "softmax": (lambda v: ops.softmax(v["a"], axis=0), {"a": x23}),
        "log_softmax": (lambda v: ops.log_softmax(v["a"], axis=-1), {"a": x23}),
        "layer_norm": (lambda v: ops.layer_norm(v["a"], v["g"], v["b"]), {"a": x23, "g": RNG.normal(size=3), "b": RNG.normal(size=3)}),
        "reshape": (lambda v: ops.reshape(v["a"], (3, 2)), {"a": x23}),
        "transpose": (lambda v: ops.transpose(v["a"], (1, 0)), {"a": x23}),
        "getitem": (lambda v: ops.getitem(v["a"], (slice(None), [0, 2, 2])), {"a": x23}),
        "concat": (lambda v: ops.concat([v["a"], v["b"]], axis=0), {"a": x23, "b": RNG.normal(size=(1, 3))}),
        "stack": (lambda v: ops.stack([v["a"], v["b"]], axis=1), {"a": x23, "b": RNG.normal(size=(2, 3))}),
        "pad": (lambda v: ops.pad(v["a"], ((1, 0), (0, 2))), {"a": x23}),
        "take": (lambda v: ops.take(v["a"], np.array([[1, 0], [1, 1]]), axis=0), {"a": x23}),
        "take_along_axis": (lambda v: ops.take_along_axis(v["a"], np.array([[2], [0]]), axis=1), {"a": x23}),
        "conv2d": (
            lambda v: ops.conv2d(v["x"], v["w"], v["b"], stride=2, padding=1),
            {"x": RNG.normal(size=(2, 1, 5, 4)), "w": RNG.normal(size=(3, 1, 3, 3)), "b": RNG.normal(size=3)},
        ),
        "depthwise_conv1d": (
            lambda v: ops.depthwise_conv1d(v["x"], v["w"], v["b"]),
            {"x": RNG.normal(size=(2, 5, 3)), "w": RNG.normal(size=(4, 3)), "b": RNG.normal(size=3)},
        ),
    }


CASES = _cases()


def test_every_registered_op_has_a_case():
    assert set(ops.REGISTRY) == set(CASES)


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_gradients(name):
    fn, leaves = CASES[name]
    weights = RNG.normal(size=forward(ComputeGraph(fn, leaves)).shape)
    g = ComputeGraph(lambda v: ops.sum(ops.mul(fn(v), weights)), leaves)
    for leaf in leaves:
        assert grad_check(g, leaf, 1e-5) < 1e-5, leaf


def test_forward_is_bit_deterministic():
    fn, leaves = CASES["conv2d"]
    a = forward(ComputeGraph(fn, leaves)).data
    b = forward(ComputeGraph(fn, leaves)).data
    assert a.tobytes() == b.tobytes()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_backward_is_linear_in_the_root(seed):
    rng = np.random.default_rng(seed)
    leaves = {"x": rng.normal(size=(3, 4)), "w": rng.normal(size=(4, 2))}

    def f1(v):
        return ops.sum(ops.tanh(v["x"] @ v["w"]))

    def f2(v):
        return ops.mean(ops.log_softmax(v["x"], axis=-1) * 0.3) + ops.sum(ops.square(v["w"]))

    parts = []
    for f in (f1, f2):
        g = ComputeGraph(f, leaves)
        forward(g)
        parts.append(backward(g))
    g = ComputeGraph(lambda v: f1(v) + f2(v), leaves)
    forward(g)
    joint = backward(g)
    for k in leaves:
        np.testing.assert_allclose(joint[k], parts[0][k] + parts[1][k], rtol=1e-12, atol=1e-14)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    arrays = {
        "encoder.block0.ffn1.w": rng.normal(size=(3, 4)),
        "scalar": np.array(np.pi),
        "half": rng.normal(size=5).astype(np.float32),
        "ids": np.arange(4, dtype=np.int64),
        "empty": np.zeros((0, 3)),
    }
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, arrays)
    back = checkpoint.load(path)
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].dtype == arrays[k].dtype
        assert back[k].shape == arrays[k].shape
        assert back[k].tobytes() == arrays[k].tobytes()
    assert checkpoint.dumps(back) == path.read_bytes()
    assert path.read_bytes()[:8] == b"FMADAPT1"


def test_checkpoint_rejects_bad_magic():
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"NOTMAGIC" + b"\0" * 8)
