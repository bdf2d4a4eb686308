import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import patterns_from
from watergenius.metrics import percentage_error
from watergenius.mlp import (MlpConfig, MlpModel, TrainingError, default_mlp_sweep, init_weights,
                             mlp_error, mlp_forward, mlp_gradient, mlp_train, n_params)
from watergenius.numerics import ShapeError


def random_net(seed, d, m, activation="linear"):
    r = np.random.default_rng(seed)
    cfg = MlpConfig(d, m, activation)
    theta = r.normal(0, 0.7, n_params(d, m))
    x = r.uniform(-1, 1, (int(r.integers(5, 51)), d))
    t = r.uniform(0, 1, x.shape[0])
    model = MlpModel(np.zeros((d + 1, m)), np.zeros((m + 1, 1)), cfg).with_flat(theta)
    return model, patterns_from(x, t)


def fd_gradient(model, patterns, h=1e-6):
    theta = model.flat()
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (mlp_error(model.with_flat(theta + e), patterns)
                - mlp_error(model.with_flat(theta - e), patterns)) / (2 * h)
    return g


def gradient_mismatch(model, patterns):
    """Largest relative disagreement between backprop and central differences."""
    analytic = mlp_gradient(model, patterns)
    numeric = fd_gradient(model, patterns)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return np.linalg.norm(analytic - numeric) / scale


def teacher_benchmark():
    r = np.random.default_rng(0)
    x = r.uniform(-1, 1, (50, 2))
    y = (0.6 * np.tanh(1.5 * x[:, 0] - 0.5 * x[:, 1] + 0.2)
         - 0.4 * np.tanh(0.3 * x[:, 0] + 1.2 * x[:, 1]) + 0.1 + r.normal(0, 0.02, 50))
    return patterns_from(x, y)


def test_forward_zero_weights():
    x = np.random.default_rng(0).normal(size=(4, 3))
    for activation, value in (("linear", 0.0), ("logistic", 0.5)):
        m = MlpModel(np.zeros((4, 2)), np.zeros((3, 1)), MlpConfig(3, 2, activation))
        np.testing.assert_array_equal(mlp_forward(m, x), value)


def test_forward_hand_case():
    m = MlpModel(np.array([[1.0], [0.0]]), np.array([[1.0], [0.0]]), MlpConfig(1, 1))
    x = np.linspace(-2, 2, 9)[:, None]
    np.testing.assert_allclose(mlp_forward(m, x), np.tanh(x), rtol=0, atol=1e-15)


def test_forward_shape_error():
    m = MlpModel(np.zeros((4, 2)), np.zeros((3, 1)), MlpConfig(3, 2))
    with pytest.raises(ShapeError):
        mlp_forward(m, np.zeros((2, 2)))


def test_softmax_rows_sum_to_one():
    r = np.random.default_rng(1)
    m = MlpModel(r.normal(size=(4, 5)), r.normal(size=(6, 3)) * 5, MlpConfig(3, 5, "softmax"))
    y = mlp_forward(m, r.normal(size=(20, 3)))
    np.testing.assert_allclose(y.sum(axis=1), 1.0, rtol=0, atol=1e-12)


def test_config_validation():
    for kwargs in ({"n_hidden": 0}, {"max_iters": 0}, {"grad_tol": 0.0},
                   {"output_activation": "relu"}, {"optimizer": "adam"}):
        with pytest.raises(ValueError):
            MlpConfig(**{"n_inputs": 2, "n_hidden": 3, **kwargs})


@pytest.mark.parametrize("activation", ["linear", "logistic"])
def test_gradient_matches_finite_differences(activation):
    for seed in range(10):
        r = np.random.default_rng(seed)
        model, patterns = random_net(seed, int(r.integers(1, 6)), int(r.integers(1, 11)), activation)
        assert gradient_mismatch(model, patterns) < 1e-6


def test_gradient_zero_at_perfect_fit():
    model, patterns = random_net(4, 3, 4)
    exact = patterns_from(patterns.inputs, mlp_forward(model, patterns.inputs))
    np.testing.assert_array_equal(mlp_gradient(model, exact), 0.0)


def test_gradient_linear_in_residuals():
    model, patterns = random_net(5, 2, 3)
    y = mlp_forward(model, patterns.inputs)[:, 0]
    t = patterns.targets[:, 0]
    doubled = patterns_from(patterns.inputs, y - 2 * (y - t))
    np.testing.assert_allclose(mlp_gradient(model, doubled), 2 * mlp_gradient(model, patterns),
                               rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("optimizer", ["scg", "conjgrad", "quasinew"])
def test_fits_linear_target(optimizer):
    x = np.linspace(0, 1, 50)
    y = 0.3 * x + 0.1
    model = mlp_train(MlpConfig(1, 3, "linear", optimizer, seed=2), patterns_from(x, y))
    assert percentage_error(mlp_forward(model, x[:, None])[:, 0], y) < 1.0


def test_training_deterministic():
    p = teacher_benchmark()
    cfg = MlpConfig(2, 4, "logistic", "scg", 100, 1e-6, seed=11)
    a, b = mlp_train(cfg, p), mlp_train(cfg, p)
    np.testing.assert_array_equal(a.flat(), b.flat())
    assert a.training_error == b.training_error


def test_init_is_seeded_gaussian_with_fan_in_scale():
    cfg = MlpConfig(20, 200, seed=3)
    theta = init_weights(cfg)
    np.testing.assert_array_equal(theta, init_weights(cfg))
    w1 = theta[:21 * 200]
    assert abs(w1.std() - 1 / np.sqrt(21)) < 0.01


def test_scg_objective_non_increasing():
    model = mlp_train(MlpConfig(2, 5, "linear", "scg", 300, 1e-8, seed=1), teacher_benchmark())
    h = np.array(model.history)
    assert h.size > 10
    assert np.all(np.diff(h) <= 0)
    assert model.training_error == h[-1]


def test_zero_init_recovers_target_mean():
    r = np.random.default_rng(8)
    x = r.normal(size=(40, 3))
    t = r.uniform(2, 5, 40)
    for optimizer in ("scg", "conjgrad", "quasinew"):
        cfg = MlpConfig(3, 4, "linear", optimizer, 200, 1e-12)
        model = mlp_train(cfg, patterns_from(x, t), init=np.zeros(n_params(3, 4)))
        # hidden-path gradients vanish identically, so only the output bias moves
        np.testing.assert_array_equal(model.w1, 0.0)
        np.testing.assert_array_equal(model.w2[:-1], 0.0)
        assert abs(model.w2[-1, 0] - t.mean()) < 1e-8


def test_optimizers_agree_on_benchmark():
    p = teacher_benchmark()
    errors = [mlp_train(MlpConfig(2, 2, "linear", opt, 1000, 1e-7, seed=7), p).training_error
              for opt in ("scg", "conjgrad", "quasinew")]
    assert max(errors) <= 1.01 * min(errors)


def test_divergence_names_iteration():
    p = patterns_from(np.array([[0.0], [1.0]]), [1e200, 2e200])
    for optimizer in ("scg", "conjgrad", "quasinew"):
        with pytest.raises(TrainingError, match="iteration 0"):
            mlp_train(MlpConfig(1, 2, optimizer=optimizer), p)


def test_default_sweep_grid():
    sweep = default_mlp_sweep()
    assert [label for label, _ in sweep] == [f"AZ{i}" for i in range(1, 13)]
    by_label = dict(sweep)
    az2, az11 = by_label["AZ2"], by_label["AZ11"]
    assert (az2.output_activation, az2.n_hidden, az2.optimizer) == ("linear", 10, "scg")
    assert (az11.output_activation, az11.n_hidden, az11.optimizer) == ("logistic", 9, "quasinew")
    assert all(c.output_activation != "softmax" for _, c in sweep)
    assert all(c.max_iters == 500 and c.grad_tol == 1e-6 for _, c in sweep)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_check_property(seed):
    r = np.random.default_rng(seed)
    model, patterns = random_net(seed, int(r.integers(1, 4)), int(r.integers(1, 6)),
                                 ["linear", "logistic"][seed % 2])
    assert gradient_mismatch(model, patterns) < 1e-6
