import numpy as np
import pytest

from forecastnet.baselines import MLP, MLPSpec, build_deep_mlp, build_mlp, seasonal_naive
from forecastnet.experiments import evaluate_naive, prepare
from forecastnet.gradcheck import param_grad_error
from forecastnet.synth import gen_baseline
from forecastnet.tensor import DimensionError


def test_mlp_structure():
    m = build_mlp(12)
    assert [p.shape for p in m.params()] == [(48, 24), (48,), (12, 48), (12,)]
    with pytest.raises(ValueError):
        build_mlp(0)


def test_mlp_zero_weights_zero_forecast():
    m = build_mlp(3)
    for p in m.params():
        p.value[...] = 0
    point, sigma = m.predict_scaled(np.ones(6))
    np.testing.assert_array_equal(point, np.zeros(3))
    assert sigma is None


def test_mlp_gradient():
    rng = np.random.default_rng(0)
    m = build_mlp(3, seed=2)
    for p in m.params():
        if p.name.endswith(".b"):
            p.value[...] = rng.uniform(-0.5, 0.5, p.shape)
    x, y = rng.uniform(0, 1, (4, 6)), rng.uniform(0, 1, (4, 3))
    assert param_grad_error(lambda: m.loss(x, y), m.params()) < 1e-5


def test_deep_mlp_tags_and_spec_round_trip():
    m = build_deep_mlp(40, 20, 24, 20)
    assert len(m.hidden) == 20
    assert m.tagged_weight("first").name == "hidden1.W"
    assert m.tagged_weight("last").name == "hidden20.W"
    assert MLPSpec.from_dict(m.spec.to_dict()) == m.spec
    assert isinstance(MLP(m.spec), MLP)
    with pytest.raises(ValueError):
        m.tagged_weight("middle")


def test_seasonal_naive():
    np.testing.assert_array_equal(seasonal_naive(np.arange(1.0, 21.0), 10), np.arange(11.0, 21.0))
    with pytest.raises(DimensionError):
        seasonal_naive(np.arange(5.0), 2)
    v = np.tile(np.arange(4.0), 10)
    X = np.lib.stride_tricks.sliding_window_view(v, 12)
    np.testing.assert_array_equal(seasonal_naive(X[:, :8], 4), X[:, 8:])


def test_seasonal_naive_positive_mase_on_baseline():
    report, _ = evaluate_naive(prepare(gen_baseline(), 20), 20)
    assert report.mean_mase > 0
