import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fusion_ensemble.errors import ConfigurationError, DataError, UsageError
from fusion_ensemble.tensor import (
    Tape,
    Tensor,
    backward,
    concat,
    conv3d,
    cross_entropy_from_logits,
    fent,
    gradcheck,
    kernels,
    layer_norm,
    linear,
    matmul,
    mean,
    mul,
    relu,
    sigmoid,
    slice_axis,
    softmax,
    sum_all,
    tanh,
    transpose,
)
from fusion_ensemble.tensor import ops

from oracles import conv3d_loops, cross_entropy_direct, matmul_loops, softmax_direct

BACKENDS = ["python"] + (["compiled"] if kernels.compiled_backend is not None else [])


def t64(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


# ---------------------------------------------------------------- conv3d

def test_conv3d_single_element():
    out = conv3d(Tensor(np.full((1, 1, 1, 1, 1), 2.0)), Tensor(np.full((1, 1, 1, 1, 1), 3.0)), Tensor([1.0]))
    assert out.data.reshape(-1).tolist() == [7.0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_conv3d_identity_kernel(backend):
    x = np.random.default_rng(0).normal(size=(2, 3, 4, 5, 5)).astype(np.float32)
    w = np.zeros((3, 3, 3, 3, 3), np.float32)
    for c in range(3):
        w[c, c, 1, 1, 1] = 1.0
    out = conv3d(Tensor(x), Tensor(w), Tensor(np.zeros(3, np.float32)), padding=1, backend=backend)
    np.testing.assert_allclose(out.data, x, atol=1e-6)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("stride,pad", [((1, 1, 1), (0, 0, 0)), ((1, 2, 2), (1, 1, 1)), ((2, 1, 2), (0, 1, 0))])
def test_conv3d_matches_loop_oracle(backend, stride, pad):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 2, 3, 4, 4))
    w = rng.normal(size=(2, 2, 2, 2, 2))
    b = rng.normal(size=2)
    expected = conv3d_loops(x, w, b, stride, pad)
    out = conv3d(Tensor(x.astype(np.float32)), Tensor(w.astype(np.float32)), Tensor(b.astype(np.float32)),
                 stride=stride, padding=pad, backend=backend)
    assert out.shape == expected.shape
    np.testing.assert_allclose(out.data, expected, atol=1e-5)


def test_conv3d_backends_agree_bitwise_on_unfold():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    x = np.random.default_rng(2).normal(size=(2, 3, 6, 7, 7))
    py, cy = kernels.get_backend("python"), kernels.get_backend("compiled")
    a = py.vol2col(x, 3, 2, 3, 1, 2, 2)
    b = cy.vol2col(x, 3, 2, 3, 1, 2, 2)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(py.col2vol(a, x.shape, 3, 2, 3, 1, 2, 2), cy.col2vol(b, x.shape, 3, 2, 3, 1, 2, 2),
                               atol=1e-12)


def test_conv3d_channel_mismatch_names_shapes():
    with pytest.raises(ConfigurationError, match=r"\(1, 2, 3, 3, 3\).*\(4, 3, 1, 1, 1\)"):
        conv3d(Tensor(np.zeros((1, 2, 3, 3, 3))), Tensor(np.zeros((4, 3, 1, 1, 1))))


def test_conv3d_output_shape_formula():
    x = Tensor(np.zeros((1, 1, 7, 9, 10), np.float32))
    w = Tensor(np.zeros((2, 1, 3, 3, 2), np.float32))
    out = conv3d(x, w, stride=(2, 2, 3), padding=(1, 0, 1))
    assert out.shape == (1, 2, (7 + 2 - 3) // 2 + 1, (9 - 3) // 2 + 1, (10 + 2 - 2) // 3 + 1)


# ---------------------------------------------------------------- linear

def test_linear_examples():
    out = linear(Tensor([1.0, 0.0]), Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([0.0, 0.0]))
    assert out.data.tolist() == [1.0, 0.0]
    out = linear(Tensor([1.0, 1.0]), Tensor([[2.0, 3.0]]), Tensor([-5.0]))
    assert out.data.tolist() == [0.0]


def test_linear_matches_loop_oracle():
    rng = np.random.default_rng(3)
    x, w, b = rng.normal(size=(4, 8)), rng.normal(size=(5, 8)), rng.normal(size=5)
    out = linear(t64(x), t64(w), t64(b))
    np.testing.assert_allclose(out.data, matmul_loops(x, w, b), atol=1e-6)


def test_linear_trailing_mismatch():
    with pytest.raises(ConfigurationError):
        linear(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))), Tensor(np.zeros(4)))


# ---------------------------------------------------------------- softmax

def test_softmax_uniform():
    np.testing.assert_allclose(softmax(Tensor(np.zeros(4))).data, [0.25] * 4, atol=1e-7)


@pytest.mark.parametrize("c", [-50.0, 0.0, 3.7, 100.0])
def test_softmax_ratio_one_to_three(c):
    p = softmax(t64([c, c + math.log(3)])).data
    np.testing.assert_allclose(p, [0.25, 0.75], atol=1e-12)


def test_softmax_matches_direct_formula():
    v = np.random.default_rng(4).normal(size=7)
    np.testing.assert_allclose(softmax(t64(v)).data, softmax_direct(v), atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 9)),
                  elements=st.floats(-30, 30)),
       st.floats(-100, 100))
def test_softmax_properties(x, c):
    p = softmax(t64(x)).data
    assert np.all(p > 0) and np.all(p <= 1)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)
    np.testing.assert_allclose(softmax(t64(x + c)).data, p, atol=1e-6)


# ---------------------------------------------------------------- cross entropy

def test_cross_entropy_examples():
    assert cross_entropy_from_logits(t64([[0.0, 0.0]]), [0]).item() == pytest.approx(math.log(2), abs=1e-12)
    stable = cross_entropy_from_logits(Tensor(np.array([[1000.0, 0.0]], np.float32)), [0]).item()
    assert math.isfinite(stable) and stable == pytest.approx(0.0, abs=1e-6)


def test_cross_entropy_matches_direct_oracle():
    rng = np.random.default_rng(5)
    logits, labels = rng.normal(size=(3, 5)), [4, 0, 2]
    got = cross_entropy_from_logits(t64(logits), labels).item()
    assert got == pytest.approx(cross_entropy_direct(logits, labels), abs=1e-6)


def test_cross_entropy_bad_label_names_sample():
    with pytest.raises(DataError, match="sample 1"):
        cross_entropy_from_logits(t64(np.zeros((2, 3))), [0, 3])


# ---------------------------------------------------------------- backward / tape

def test_backward_sum_gives_ones():
    p = t64(np.arange(6.0).reshape(2, 3), grad=True)
    with Tape() as tape:
        loss = sum_all(p)
    backward(loss, tape)
    np.testing.assert_array_equal(p.grad, np.ones((2, 3)))


def test_backward_quadratic_and_accumulation():
    p = t64([1.0, -2.0], grad=True)
    with Tape() as tape:
        loss = sum_all(mul(p, p))
    backward(loss, tape)
    np.testing.assert_array_equal(p.grad, [2.0, -4.0])
    backward(loss, tape)
    np.testing.assert_array_equal(p.grad, [4.0, -8.0])


def test_backward_reused_input_counts_each_use():
    p = t64([3.0], grad=True)
    with Tape() as tape:
        loss = sum_all(ops.add(mul(p, p), p))
    backward(loss, tape)
    np.testing.assert_array_equal(p.grad, [7.0])


def test_backward_rejects_non_scalar():
    p = t64([1.0, 2.0], grad=True)
    with Tape() as tape:
        y = mul(p, p)
    with pytest.raises(UsageError):
        backward(y, tape)


def test_no_recording_without_tape():
    p = t64([1.0], grad=True)
    y = mul(p, p)
    assert y._tape_id is None


# ---------------------------------------------------------------- misc primitives

def test_relu_and_concat_examples():
    assert relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]
    assert concat([Tensor([1.0, 2.0]), Tensor([3.0])], axis=0).data.tolist() == [1.0, 2.0, 3.0]


def test_add_refuses_broadcast():
    with pytest.raises(ConfigurationError):
        ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))


def _rand(rng, *shape):
    return t64(rng.normal(size=shape))


PRIMITIVE_CASES = {
    "add": (lambda a, b: ops.add(a, b), [(3, 4), (3, 4)]),
    "sub": (lambda a, b: ops.sub(a, b), [(3, 4), (3, 4)]),
    "mul": (lambda a, b: mul(a, b), [(3, 4), (3, 4)]),
    "scale": (lambda a: ops.scale(a, -1.7), [(2, 5)]),
    "relu": (lambda a: relu(a), [(4, 5)]),
    "sigmoid": (lambda a: sigmoid(a), [(4, 5)]),
    "tanh": (lambda a: tanh(a), [(4, 5)]),
    "reshape": (lambda a: ops.reshape(a, (6, 2)), [(3, 4)]),
    "transpose": (lambda a: transpose(a, (2, 0, 1)), [(2, 3, 4)]),
    "concat": (lambda a, b: concat([a, b], axis=1), [(2, 3), (2, 2)]),
    "slice": (lambda a: slice_axis(a, 1, 1, 3), [(2, 4, 3)]),
    "stack": (lambda a, b: ops.stack([a, b], axis=1), [(2, 3), (2, 3)]),
    "mean": (lambda a: mean(a, axis=1), [(2, 5, 3)]),
    "sum": (lambda a: sum_all(a), [(2, 3)]),
    "matmul": (lambda a, b: matmul(a, b), [(2, 3, 4), (4, 5)]),
    "matmul_batched": (lambda a, b: matmul(a, b), [(2, 3, 4), (2, 4, 2)]),
    "linear": (lambda x, w, b: linear(x, w, b), [(2, 3, 4), (5, 4), (5,)]),
    "softmax": (lambda a: softmax(a), [(3, 6)]),
    "layer_norm": (lambda x, g, b: layer_norm(x, g, b), [(2, 3, 5), (5,), (5,)]),
    "cross_entropy": (lambda a: cross_entropy_from_logits(a, [1, 0, 3]), [(3, 4)]),
    "conv3d": (lambda x, w, b: conv3d(x, w, b, stride=(1, 2, 1), padding=(1, 1, 0)),
               [(2, 2, 3, 4, 3), (3, 2, 2, 3, 2), (3,)]),
    "attention": (lambda q, k, v: ops.scaled_dot_product_attention(q, k, v)[0], [(2, 3, 4), (2, 3, 4), (2, 3, 4)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_gradcheck(name):
    fn, shapes = PRIMITIVE_CASES[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    tensors = [_rand(rng, *s) for s in shapes]
    if name == "relu":  # keep away from the kink
        tensors[0].data += np.sign(tensors[0].data) * 0.1
    weights = t64(rng.normal(size=fn(*tensors).shape))

    def loss():
        out = fn(*tensors)
        return sum_all(mul(out, weights)) if out.ndim else out

    report = gradcheck(loss, tensors)
    assert report.passed, report.as_dict()


def test_every_primitive_has_a_gradcheck_case():
    covered = {"stack"} | set(PRIMITIVE_CASES)
    for prim in ops.PRIMITIVES:
        assert prim in covered, prim


def test_identical_inputs_bitwise_identical_outputs():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(2, 3, 4, 6, 6)).astype(np.float32)
    w = rng.normal(size=(4, 3, 3, 3, 3)).astype(np.float32)
    a = conv3d(Tensor(x), Tensor(w), padding=1).data
    b = conv3d(Tensor(x.copy()), Tensor(w.copy()), padding=1).data
    assert a.tobytes() == b.tobytes()


# ---------------------------------------------------------------- FENT

@settings(max_examples=60, deadline=None)
@given(hnp.arrays(st.sampled_from([np.float32, np.float64]), hnp.array_shapes(min_dims=0, max_dims=5, max_side=4),
                  elements=st.floats(width=32, allow_nan=False)))
def test_fent_round_trip_bitwise(arr):
    back = fent.loads(fent.dumps(arr))
    assert back.dtype == arr.dtype and back.shape == arr.shape
    assert back.tobytes() == np.ascontiguousarray(arr).tobytes()


def test_fent_header_layout():
    buf = fent.dumps(np.zeros((2, 3), np.float32))
    assert buf[:4] == b"FENT" and buf[4] == 0x01 and buf[5] == 0x01 and buf[6] == 2
    assert int.from_bytes(buf[7:11], "little") == 2 and int.from_bytes(buf[11:15], "little") == 3
    assert len(buf) == 15 + 6 * 4


def test_fent_rejects_bad_magic_and_truncation():
    buf = fent.dumps(np.ones(4, np.float32))
    with pytest.raises(fent.FentError):
        fent.loads(b"XENT" + buf[4:])
    with pytest.raises(fent.FentError):
        fent.loads(buf[:-1])


def test_fent_file_round_trip(tmp_path):
    arr = np.random.default_rng(0).normal(size=(3, 1, 4, 4)).astype(np.float32)
    fent.save(tmp_path / "x.fent", arr)
    assert fent.load(tmp_path / "x.fent").tobytes() == arr.tobytes()
