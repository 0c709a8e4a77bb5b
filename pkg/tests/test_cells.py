import math

import numpy as np
import pytest

from forecastnet import tensor as T
from forecastnet.cells import (
    MIN_CONV_INPUT,
    ConvCell,
    DenseCell,
    LinearHead,
    MixtureHead,
    conv_cell_forward,
    conv_stage_lengths,
    dense_cell_forward,
    gaussian_nll,
    init_params,
    mixture_output,
    mse,
)
from forecastnet.gradcheck import param_grad_error
from forecastnet.tensor import DimensionError, Tensor

LOG_2PI_HALF = 0.5 * math.log(2 * math.pi)


def test_he_init_std():
    w = init_params((100_000, 8), "he", np.random.default_rng(0))
    assert w.std() == pytest.approx(0.5, abs=0.01)


def test_xavier_init_std():
    w = init_params((400, 600), "xavier_normal", np.random.default_rng(0))
    assert w.std() == pytest.approx(math.sqrt(2 / 1000), rel=0.01)


def test_init_deterministic_and_errors():
    a = init_params((3, 4), "he", np.random.default_rng(5))
    b = init_params((3, 4), "he", np.random.default_rng(5))
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ValueError):
        init_params((3, 0), "he", np.random.default_rng(0))
    with pytest.raises(ValueError):
        init_params((3, 4), "glorot", np.random.default_rng(0))


def test_biases_start_at_zero():
    cell = DenseCell("c", 5, 4)
    assert all(not b.value.any() for _, b in cell.layers)
    head = MixtureHead("h", 4)
    assert head.b_mu.value[0] == 0 and head.b_sigma.value[0] == 0


def test_dense_cell_zero_and_hand_cases():
    cell = DenseCell("c", 3, 4)
    for p in cell.params():
        p.value[...] = 0
    np.testing.assert_array_equal(dense_cell_forward(cell, Tensor([1.0, 2.0, 3.0])).data, np.zeros(4))
    one = DenseCell("u", 1, 1, n_layers=1)
    one.layers[0][0].value[...] = 1.0
    assert dense_cell_forward(one, Tensor([2.0])).item() == 2.0
    with pytest.raises(DimensionError):
        cell(Tensor([1.0, 2.0]))


def test_dense_cell_gradient():
    rng = np.random.default_rng(1)
    cell = DenseCell("c", 5, 6, rng=rng)
    for _, b in cell.layers:
        b.value[...] = rng.uniform(-0.5, 0.5, b.shape)
    x = rng.uniform(0, 1, (3, 5))
    assert param_grad_error(lambda: T.total(cell(Tensor(x))), cell.params()) < 1e-5


def test_conv_stage_lengths():
    assert conv_stage_lengths(50) == [50, 49, 48, 47, 46]
    assert MIN_CONV_INPUT == 5
    assert conv_stage_lengths(MIN_CONV_INPUT)[-1] == 1
    assert conv_stage_lengths(4)[-1] == 0
    with pytest.raises(DimensionError):
        ConvCell("c", 4)


def test_conv_cell_zero_input_and_gradient():
    rng = np.random.default_rng(2)
    cell = ConvCell("c", 9, 3, rng=rng)
    np.testing.assert_array_equal(conv_cell_forward(cell, Tensor(np.zeros(9))).data, np.zeros(3))
    for p in cell.params():
        if p.name.endswith(".b"):
            p.value[...] = rng.uniform(-0.5, 0.5, p.shape)
    x = rng.uniform(0, 1, (2, 9))
    assert param_grad_error(lambda: T.total(cell(Tensor(x))), cell.params()) < 1e-5


def test_mixture_head_examples():
    head = MixtureHead("h", 3)
    for p in head.params():
        p.value[...] = 0
    mu, sigma = mixture_output(head, np.ones(3))
    assert mu == 0 and sigma == pytest.approx(math.log(2))
    head.b_mu.value[...] = 1.5
    assert mixture_output(head, np.ones(3))[0] == 1.5
    with pytest.raises(DimensionError):
        head(Tensor(np.ones(4)))


def test_mixture_sigma_positive_sweep():
    rng = np.random.default_rng(3)
    head = MixtureHead("h", 4)
    for _ in range(100):
        for p in head.params():
            p.value[...] = rng.normal(0, 20, p.shape)
        _, sigma = head(Tensor(rng.normal(0, 20, (100, 4))))
        assert np.all(sigma.data > 0)


def test_linear_head_unbounded():
    head = LinearHead("h", 2)
    head.W.value[...] = [[-5.0, -5.0]]
    y, none = head(Tensor([1.0, 1.0]))
    assert y.item() == -10.0 and none is None


def test_gaussian_nll_values():
    assert gaussian_nll(0.3, 1.0, 0.3) == pytest.approx(LOG_2PI_HALF, abs=1e-12)
    assert gaussian_nll(0.0, 1.0, 1.0) == pytest.approx(1.418939, abs=1e-6)
    with pytest.raises(ValueError):
        gaussian_nll(0.0, 0.0, 1.0)
    g = T.finite_diff_grad(lambda m: gaussian_nll(float(m[0]), 0.7, 2.0), np.array([2.0]))
    assert abs(g[0]) < 1e-8
    # sign flips around y: minimum over mu sits at mu = y
    left = T.finite_diff_grad(lambda m: gaussian_nll(float(m[0]), 0.7, 2.0), np.array([1.9]))
    right = T.finite_diff_grad(lambda m: gaussian_nll(float(m[0]), 0.7, 2.0), np.array([2.1]))
    assert left[0] < 0 < right[0]


def test_tensor_nll_agrees_with_scalar():
    mu, s, y = np.array([0.1, -2.0]), np.array([0.5, 3.0]), np.array([1.0, 0.0])
    out = T.gaussian_nll(Tensor(mu), Tensor(s), y).data
    np.testing.assert_allclose(out, [gaussian_nll(*t) for t in zip(mu, s, y)], rtol=1e-14)


def test_mse_values_and_gradient():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0
    assert mse([1.0, 2.0], [0.0, 0.0]) == 2.5
    with pytest.raises(DimensionError):
        mse([1.0], [1.0, 2.0])
    p = T.Param("p", [1.0, 2.0])
    with T.Tape() as tape:
        loss = T.mse(p, np.zeros(2))
    T.backward(tape, loss)
    np.testing.assert_allclose(p.grad, [1.0, 2.0])  # 2 (yhat - y) / tau
