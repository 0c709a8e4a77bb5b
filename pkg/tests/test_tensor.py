import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forecastnet import tensor as T
from forecastnet.tensor import DimensionError, Param, Tape, Tensor, backward, finite_diff_grad, grad_of


def test_affine_identity_and_hand_value():
    out = T.affine(np.eye(2), Tensor([3.0, 4.0]), np.zeros(2))
    np.testing.assert_array_equal(out.data, [3.0, 4.0])
    out = T.affine(np.array([[1.0, 2.0], [3.0, 4.0]]), Tensor([1.0, 1.0]), np.ones(2))
    np.testing.assert_array_equal(out.data, [4.0, 8.0])


def test_affine_input_gradient_matches_hand_and_fd():
    W = np.array([[1.0, 2.0], [3.0, 4.0]])
    x = Param("x", [1.0, 1.0])
    with Tape() as tape:
        out = T.affine(W, x, np.ones(2))
        # upstream [1, 0] is the gradient of picking out[0]
        loss = T.total(T.affine(np.array([[1.0, 0.0]]), out, np.zeros(1)))
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, [1.0, 2.0])
    fd = finite_diff_grad(lambda v: float((W @ v + 1.0)[0]), x.value.copy())
    np.testing.assert_allclose(fd, [1.0, 2.0], rtol=1e-8)


def test_affine_shape_mismatch():
    with pytest.raises(DimensionError):
        T.affine(np.eye(2), Tensor([1.0, 2.0, 3.0]), np.zeros(2))
    with pytest.raises(DimensionError):
        T.affine(np.eye(2), Tensor([1.0, 2.0]), np.zeros(3))


def test_activations_analytic_values():
    assert T.softplus(Tensor([0.0])).item() == pytest.approx(math.log(2.0), abs=1e-15)
    np.testing.assert_array_equal(T.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
    x = Param("x", [0.0])
    with Tape() as tape:
        y = T.sigmoid(x)
        loss = T.total(y)
    assert y.item() == 0.5
    backward(tape, loss)
    assert x.grad[0] == pytest.approx(0.25)


def test_softplus_overflow_safe_and_positive():
    v = np.array([-800.0, -40.0, -1.0, 0.0, 29.9, 30.1, 800.0])
    out = T.softplus_array(v)
    assert np.all(np.isfinite(out)) and np.all(out > 0)
    assert out[-1] == 800.0
    assert out[-2] == pytest.approx(30.1 + math.log1p(math.exp(-30.1)), rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_softplus_strictly_positive(v):
    assert T.softplus_array(np.array([v]))[0] > 0


def test_conv1d_examples():
    out = T.conv1d_valid(Tensor([[1.0, 2.0, 3.0, 4.0]]), np.array([[[1.0, 1.0]]]), np.zeros(1))
    np.testing.assert_array_equal(out.data, [[3.0, 5.0, 7.0]])
    x = np.array([[0.5, -1.0, 2.0]])
    np.testing.assert_array_equal(T.conv1d_valid(Tensor(x), np.array([[[1.0]]]), np.zeros(1)).data, x)
    with pytest.raises(DimensionError):
        T.conv1d_valid(Tensor([[1.0]]), np.ones((1, 1, 2)), np.zeros(1))


def test_conv1d_kernel_grad_fd():
    rng = np.random.default_rng(3)
    x = rng.uniform(-2, 2, (1, 8))
    K = Param("K", rng.uniform(-2, 2, (2, 1, 3)))
    b = Param("b", rng.uniform(-2, 2, 2))
    tgt = rng.uniform(-2, 2, (2, 6))

    def loss():
        return T.mse(T.conv1d_valid(Tensor(x), K, b), tgt)

    with Tape() as tape:
        L = loss()
    backward(tape, L)

    def f(theta):
        saved = K.value.copy()
        K.value[...] = theta
        v = loss().item()
        K.value[...] = saved
        return v

    fd = finite_diff_grad(f, K.value.copy())
    assert np.max(np.abs(fd - K.grad)) / np.max(np.abs(fd)) < 1e-6


def test_avg_pool_examples():
    x = Param("x", [[1.0, 3.0, 5.0, 7.0]])
    with Tape() as tape:
        y = T.avg_pool1d(x, 2, 1)
        loss = T.total(y)
    np.testing.assert_array_equal(y.data, [[2.0, 4.0, 6.0]])
    backward(tape, loss)
    np.testing.assert_array_equal(x.grad, [[0.5, 1.0, 1.0, 0.5]])
    np.testing.assert_array_equal(T.avg_pool1d(Tensor([[1.0, 2.0]]), 1, 1).data, [[1.0, 2.0]])
    with pytest.raises(DimensionError):
        T.avg_pool1d(Tensor([[1.0]]), 2, 1)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40), st.integers(1, 5), st.integers(1, 5), st.integers(1, 3))
def test_conv_pool_length_arithmetic(length, k, pool, stride):
    if length < k or length - k + 1 < pool:
        return
    y = T.conv1d_valid(Tensor(np.ones((1, length))), np.ones((1, 1, k)), np.zeros(1))
    assert y.shape[-1] == length - k + 1
    z = T.avg_pool1d(y, pool, stride)
    assert z.shape[-1] == (length - k + 1 - pool) // stride + 1


def test_concat_forward_and_split():
    a, b = Param("a", [1.0, 2.0]), Param("b", [3.0])
    with Tape() as tape:
        out = T.concat([a, b])
        loss = T.total(T.affine(np.array([[5.0, 6.0, 7.0]]), out, np.zeros(1)))
    np.testing.assert_array_equal(out.data, [1.0, 2.0, 3.0])
    backward(tape, loss)
    np.testing.assert_array_equal(a.grad, [5.0, 6.0])
    np.testing.assert_array_equal(b.grad, [7.0])
    np.testing.assert_array_equal(T.concat([Tensor([4.0])]).data, [4.0])
    with pytest.raises(ValueError):
        T.concat([])


def test_backward_identity_and_sum_rule():
    x = Param("x", [2.0])
    with Tape() as tape:
        loss = T.total(x)
    backward(tape, loss)
    assert x.grad[0] == 1.0
    x.zero_grad()
    with Tape() as tape:
        loss = T.total(T.add(x, x))
    backward(tape, loss)
    assert x.grad[0] == 2.0


def test_backward_accumulates_and_rejects_vector_loss():
    x = Param("x", [1.0, 2.0])
    for _ in range(2):
        with Tape() as tape:
            loss = T.total(x)
        backward(tape, loss)
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])
    with Tape() as tape:
        y = T.relu(x)
    with pytest.raises(ValueError):
        backward(tape, y)


def test_three_layer_net_against_fd():
    rng = np.random.default_rng(11)
    params = []
    shapes = [(5, 4), (5, 5), (2, 5)]
    for i, s in enumerate(shapes):
        params.append(Param(f"W{i}", rng.normal(0, 0.7, s)))
        params.append(Param(f"b{i}", rng.normal(0, 0.3, s[0])))
    x = rng.uniform(-1, 1, (3, 4))
    tgt = rng.uniform(-1, 1, (3, 2))

    def loss():
        h = Tensor(x)
        for i in range(3):
            h = T.affine(params[2 * i], h, params[2 * i + 1])
            if i < 2:
                h = T.sigmoid(h)
        return T.mse(h, tgt)

    from forecastnet.gradcheck import param_grad_error

    assert param_grad_error(loss, params) < 1e-6


def test_backward_is_deterministic():
    rng = np.random.default_rng(0)
    W = Param("W", rng.normal(size=(3, 3)))
    x = rng.normal(size=(4, 3))
    grads = []
    for _ in range(2):
        W.zero_grad()
        with Tape() as tape:
            loss = T.mse(T.softplus(T.affine(W, Tensor(x), np.zeros(3))), np.zeros((4, 3)))
        backward(tape, loss)
        grads.append(W.grad.copy())
    assert grads[0].tobytes() == grads[1].tobytes()


def test_finite_diff_examples():
    np.testing.assert_allclose(finite_diff_grad(lambda t: float(t[0] ** 2), np.array([3.0])), [6.0], rtol=1e-8)
    np.testing.assert_array_equal(finite_diff_grad(lambda t: 7.0, np.zeros(3)), np.zeros(3))
    g = finite_diff_grad(lambda t: T.gaussian_nll(Tensor(t), Tensor([1.0]), np.zeros(1)).item(), np.zeros(1))
    assert abs(g[0]) < 1e-9
    with pytest.raises(ValueError):
        finite_diff_grad(lambda t: 0.0, np.zeros(1), eps=0.0)


def test_tensor_rejects_non_finite():
    with pytest.raises(ValueError):
        Tensor([1.0, np.nan])
    with pytest.raises(ValueError):
        Tensor([np.inf])
    t = Tensor([1.0, 2.0])
    assert t.is_finite() and t.shape == (2,)


def test_gaussian_nll_domain_error():
    with pytest.raises(ValueError):
        T.gaussian_nll(Tensor([0.0]), Tensor([0.0]), np.zeros(1))


def test_mse_length_mismatch():
    with pytest.raises(DimensionError):
        T.mse(Tensor([1.0, 2.0]), np.zeros(3))


def test_no_record_suspends_tape():
    x = Param("x", [1.0])
    with Tape() as tape:
        with T.no_record():
            T.relu(x)
        assert len(tape) == 0
        T.relu(x)
        assert len(tape) == 1


def test_grad_of_intermediate():
    x = Param("x", [1.0, -2.0])
    with Tape() as tape:
        h = T.affine(np.array([[2.0, 0.0], [0.0, 3.0]]), x, np.zeros(2))
        loss = T.total(h)
    np.testing.assert_array_equal(grad_of(tape, loss, h), [1.0, 1.0])
