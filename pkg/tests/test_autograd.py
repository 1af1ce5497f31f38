import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tagseq import autograd as ag
from tagseq.errors import ContractError, DimensionError


def param(rng, *shape, low=-1.0, high=1.0):
    return ag.parameter(rng.uniform(low, high, size=shape))


# ---------------------------------------------------------------- forward values


def test_matmul_identity():
    out = ag.matmul(ag.constant(np.eye(2)), ag.constant([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])


def test_matmul_selector_row():
    out = ag.constant([[1.0, 0.0]]) @ ag.constant([[2.0], [5.0]])
    assert out.data.tolist() == [[2.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ag.matmul(ag.constant(np.ones((2, 3))), ag.constant(np.ones((2, 3))))


def test_softmax_symmetric_and_large_inputs():
    np.testing.assert_array_equal(ag.softmax(ag.constant([0.0, 0.0])).data, [0.5, 0.5])
    out = ag.softmax(ag.constant([1000.0, 1000.0])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_array_equal(out, [0.5, 0.5])


def test_softmax_against_mpmath():
    mpmath.mp.dps = 50
    xs = [1, 2, 3]
    denom = sum(mpmath.e**x for x in xs)
    expected = [float(mpmath.e**x / denom) for x in xs]
    np.testing.assert_allclose(ag.softmax(ag.constant(np.array(xs, float))).data, expected, rtol=0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 6)), elements=st.floats(-50, 50)),
       st.floats(-100, 100))
def test_softmax_rows_sum_to_one_and_shift_invariant(x, c):
    s = ag.softmax(ag.constant(x)).data
    assert np.all((s > 0) | (x < x.max(axis=-1, keepdims=True) - 30))
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-9)
    np.testing.assert_allclose(ag.softmax(ag.constant(x + c)).data, s, atol=1e-12)


def test_layer_norm_constant_slice_collapses_to_bias():
    out = ag.layer_norm(ag.constant([5.0, 5.0, 5.0]), ag.constant(np.ones(3)), ag.constant(np.zeros(3)), eps=1e-5)
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_layer_norm_two_points():
    out = ag.layer_norm(ag.constant([1.0, 3.0]), ag.constant(np.ones(2)), ag.constant(np.zeros(2)), eps=1e-5)
    expected = np.array([-1.0, 1.0]) / math.sqrt(1.0 + 1e-5)
    np.testing.assert_allclose(out.data, expected, atol=1e-12)


def test_layer_norm_statistics(rng):
    x = ag.constant(rng.normal(3.0, 2.0, size=(5, 16)))
    out = ag.layer_norm(x, ag.constant(np.ones(16)), ag.constant(np.zeros(16))).data
    assert np.abs(out.mean(axis=-1)).max() <= 1e-9
    assert np.abs(out.var(axis=-1) - 1.0).max() <= 1e-5


def test_layer_norm_needs_two_features():
    with pytest.raises(ContractError):
        ag.layer_norm(ag.constant([[1.0]]), ag.constant([1.0]), ag.constant([0.0]))


# ----------------------------------------------------------------- backward


def test_backward_sum_is_ones():
    w = ag.parameter(np.zeros(3))
    ag.backward(ag.total(w))
    np.testing.assert_array_equal(w.grad, [1.0, 1.0, 1.0])


def test_backward_square():
    w = ag.parameter([1.0, 2.0])
    ag.backward(ag.total(w * w))
    np.testing.assert_array_equal(w.grad, [2.0, 4.0])


def test_backward_returns_map_and_zero_for_unreachable():
    w = ag.parameter([1.0, 2.0])
    unused = ag.parameter(np.ones((2, 2)))
    grads = ag.backward(ag.total(w), [w, unused])
    np.testing.assert_array_equal(grads[w.node_id], [1.0, 1.0])
    np.testing.assert_array_equal(unused.grad, np.zeros((2, 2)))


def test_backward_rejects_non_scalar():
    with pytest.raises(ContractError):
        ag.backward(ag.parameter([1.0, 2.0]) * 2.0)


def test_shared_subexpression_visited_once():
    # y = x*x used twice; d/dx (y + y) = 4x
    x = ag.parameter([3.0])
    y = x * x
    ag.backward(ag.total(y + y))
    np.testing.assert_allclose(x.grad, [12.0])


def test_no_grad_records_nothing():
    x = ag.parameter([1.0])
    with ag.no_grad():
        y = x * x
    assert not y.requires_grad


# --------------------------------------------------------- finite differences


def test_matmul_gradient(rng):
    a, b = param(rng, 3, 4), param(rng, 4, 2)
    assert ag.grad_check(lambda: ag.total(a @ b), [a, b]) <= 1e-6


def test_batched_matmul_gradient(rng):
    a, b = param(rng, 2, 3, 4), param(rng, 4, 5)
    assert ag.grad_check(lambda: ag.total(ag.tanh(a @ b)), [a, b]) <= 1e-6


def test_linear_softmax_cross_entropy_gradient(rng):
    x = ag.constant(rng.uniform(-1, 1, size=(6, 5)))
    w, b = param(rng, 5, 7), param(rng, 7)
    targets = rng.integers(0, 7, size=6)
    assert ag.grad_check(lambda: ag.cross_entropy(x @ w + b, targets), [w, b]) <= 1e-6


def test_layer_norm_gradient(rng):
    x, g, b = param(rng, 8), param(rng, 8), param(rng, 8)
    w = ag.constant(rng.uniform(-1, 1, size=8))
    assert ag.grad_check(lambda: ag.total(ag.layer_norm(x, g, b) * w), [x, g, b]) <= 1e-6


@pytest.mark.parametrize(
    "fn",
    [ag.sigmoid, ag.tanh, ag.relu, lambda t: ag.softmax(t, axis=0), lambda t: ag.softmax(t, axis=-1)],
    ids=["sigmoid", "tanh", "relu", "softmax0", "softmax1"],
)
def test_elementwise_gradients(rng, fn):
    x = param(rng, 3, 4)
    # keep relu away from its kink
    x.data = np.where(np.abs(x.data) < 1e-3, 0.1, x.data)
    w = ag.constant(rng.uniform(-1, 1, size=(3, 4)))
    assert ag.grad_check(lambda: ag.total(fn(x) * w), [x]) <= 1e-6


def test_data_movement_gradients(rng):
    a, b = param(rng, 2, 3), param(rng, 2, 2)
    w = ag.constant(rng.uniform(-1, 1, size=(3, 2)))

    def build():
        c = ag.concat([a, b], axis=1)  # (2, 5)
        s = ag.take(c, (slice(None), slice(1, 4)))  # (2, 3)
        t = ag.transpose(ag.reshape(s, (3, 2)), (1, 0))
        st_ = ag.stack([t, t * t], axis=0)
        return ag.total(ag.take(st_, 1) @ w) + ag.total(ag.take(st_, 0))

    assert ag.grad_check(build, [a, b]) <= 1e-6


def test_embedding_gradient_accumulates_repeats(rng):
    table = param(rng, 6, 3)
    ids = np.array([[1, 1, 4], [0, 1, 5]])
    w = ag.constant(rng.uniform(-1, 1, size=(2, 3, 3)))
    assert ag.grad_check(lambda: ag.total(ag.embedding(table, ids) * w), [table]) <= 1e-6
    table.grad = None
    ag.backward(ag.total(ag.embedding(table, ids)))
    np.testing.assert_array_equal(table.grad[:, 0], [1, 3, 0, 0, 1, 1])


def test_broadcast_add_mul_gradient(rng):
    x, b, s = param(rng, 4, 3), param(rng, 3), param(rng, 1)
    assert ag.grad_check(lambda: ag.total(ag.tanh(ag.mul(ag.add(x, b), s))), [x, b, s]) <= 1e-6


def test_cross_entropy_weights_and_padding(rng):
    logits = param(rng, 2, 3, 5)
    targets = np.array([[1, 2, 0], [3, 0, 0]])
    weights = (targets != 0).astype(float)
    assert ag.grad_check(lambda: ag.cross_entropy(logits, targets, weights), [logits]) <= 1e-6
    with pytest.raises(ContractError):
        ag.cross_entropy(logits, targets, np.zeros_like(weights))


def test_cross_entropy_uniform_logits_is_log_v():
    logits = ag.constant(np.zeros((4, 20)))
    assert ag.cross_entropy(logits, np.arange(4)).item() == pytest.approx(math.log(20), abs=1e-12)


def test_grad_check_detects_a_wrong_rule(rng):
    x = param(rng, 5)

    def wrong_square(t):
        return ag._result(t.data**2, (t,), lambda g: (g * t.data,), "bad")  # should be 2*t

    assert ag.grad_check(lambda: ag.total(wrong_square(x)), [x]) > 0.1


def test_forward_is_deterministic(rng):
    a, b = param(rng, 16, 16), param(rng, 16, 16)
    first = ag.softmax(a @ b).data.copy()
    assert np.array_equal(ag.softmax(a @ b).data, first)
