import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import qp_oracle
from conftest import patterns_from
from watergenius.metrics import percentage_error
from watergenius.numerics import NumericsError, ShapeError
from watergenius.svr import (FAMILIES, Kernel, SvrConfig, SvrModel, default_kernel_sweep,
                             dual_objective, kernel_eval, kernel_matrix, solve_dual, svr_predict,
                             svr_train)

ALL_KERNELS = [c.kernel for c in default_kernel_sweep()] + [
    Kernel("poly", degree=2, scale=0.5, offset=2.0)]


def kkt_report(model, x, y):
    """Worst breach of the epsilon-tube trichotomy over the training points."""
    f = svr_predict(model, x)[:, 0]
    coef = np.zeros(len(y))
    pos = {tuple(r): i for i, r in enumerate(x)}
    for sv, cf in zip(model.support_vectors, model.dual_coefficients):
        coef[pos[tuple(sv)]] = cf
    c, eps = model.config.c, model.config.epsilon
    dev = y - f
    worst = 0.0
    for d, cf in zip(dev, coef):
        if cf == 0:
            worst = max(worst, abs(d) - eps)
        elif abs(cf) < c:
            worst = max(worst, abs(abs(d) - eps))
            worst = max(worst, -d * np.sign(cf))  # free coefficient sits on the correct tube side
        else:
            worst = max(worst, eps - abs(d), -d * np.sign(cf))
    return worst


def test_kernel_examples():
    assert kernel_eval(Kernel("linear"), [1, 2], [1, 2]) == 5.0
    assert kernel_eval(Kernel("rbf", sigma=3.0), [0.3, 0.1], [0.3, 0.1]) == 1.0
    r = np.random.default_rng(0)
    for _ in range(20):
        x, y = r.normal(size=3), r.normal(size=3)
        assert math.isclose(kernel_eval(Kernel("poly", degree=1), x, y),
                            kernel_eval(Kernel("linear"), x, y) + 1, rel_tol=1e-12, abs_tol=1e-12)


def test_kernel_hand_values():
    x, y = np.array([0.2, 0.5]), np.array([0.6, 0.1])
    d2 = 0.16 + 0.16
    assert math.isclose(kernel_eval(Kernel("rbf", sigma=2.0), x, y), math.exp(-d2 / 8), rel_tol=1e-14)
    assert math.isclose(kernel_eval(Kernel("erbf", sigma=2.0), x, y), math.exp(-math.sqrt(d2) / 8),
                        rel_tol=1e-14)
    assert math.isclose(kernel_eval(Kernel("poly", degree=3), x, y), (0.17 + 1) ** 3, rel_tol=1e-14)
    assert math.isclose(kernel_eval(Kernel("poly", degree=2, scale=2.0, offset=0.5), x, y),
                        (0.34 + 0.5) ** 2, rel_tol=1e-14)

    def spline1(a, b):
        m = min(a, b)
        return 1 + a * b + a * b * m - (a + b) / 2 * m * m + m**3 / 3

    assert math.isclose(kernel_eval(Kernel("spline"), x, y), spline1(0.2, 0.6) * spline1(0.5, 0.1),
                        rel_tol=1e-14)
    z = np.exp(-np.array([0.16, 0.16]))
    assert math.isclose(kernel_eval(Kernel("anova", max_order=1), x, y), z.sum(), rel_tol=1e-14)
    assert math.isclose(kernel_eval(Kernel("anova", max_order=0), x, y), z.sum(), rel_tol=1e-14)
    assert math.isclose(kernel_eval(Kernel("anova", max_order=2), x, y), z.sum() + z.prod(),
                        rel_tol=1e-14)


def test_bspline_values():
    # degree 1 (2p+1 = 1): hat function on [-1, 1]
    k1 = Kernel("bspline", degree=0)
    assert kernel_eval(k1, [0.0], [0.0]) == 1.0
    assert math.isclose(kernel_eval(k1, [0.25], [0.0]), 0.75, rel_tol=1e-14)
    assert kernel_eval(k1, [1.5], [0.0]) == 0.0
    # cubic B-spline: 2/3 at 0, 1/6 at +-1, 0 beyond 2
    k3 = Kernel("bspline", degree=1)
    assert math.isclose(kernel_eval(k3, [0.0], [0.0]), 2 / 3, rel_tol=1e-14)
    assert math.isclose(kernel_eval(k3, [1.0], [0.0]), 1 / 6, rel_tol=1e-14)
    assert kernel_eval(k3, [2.5], [0.0]) == 0.0


def test_anova_brute_force_subsets():
    from itertools import combinations
    r = np.random.default_rng(4)
    x, y = r.uniform(size=4), r.uniform(size=4)
    z = np.exp(-(x - y) ** 2)
    for order in range(1, 5):
        expect = sum(np.prod(z[list(s)]) for q in range(1, order + 1)
                     for s in combinations(range(4), q))
        assert math.isclose(kernel_eval(Kernel("anova", max_order=order), x, y), expect,
                            rel_tol=1e-13)


def test_kernel_parameter_rules():
    with pytest.raises(ValueError):
        Kernel("linear", sigma=1.0)
    with pytest.raises(ValueError):
        Kernel("rbf")
    with pytest.raises(ValueError):
        Kernel("rbf", sigma=0.0)
    with pytest.raises(ValueError):
        Kernel("cosine")
    assert Kernel("rbf", sigma=5.0).params() == {"sigma": 5.0}
    assert Kernel("linear").params() == {}


def test_kernel_errors():
    with pytest.raises(ShapeError):
        kernel_eval(Kernel("linear"), [1, 2], [1, 2, 3])
    with pytest.raises(NumericsError):
        kernel_eval(Kernel("linear"), [np.nan], [1.0])
    with pytest.raises(NumericsError, match="Poly"):
        kernel_eval(Kernel("poly", degree=3), [1e120], [1e120])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, len(ALL_KERNELS) - 1), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_kernel_symmetry(which, d, seed):
    r = np.random.default_rng(seed)
    k = ALL_KERNELS[which]
    x, y = r.uniform(-1, 2, d), r.uniform(-1, 2, d)
    assert abs(kernel_eval(k, x, y) - kernel_eval(k, y, x)) <= 1e-12 * max(1, abs(kernel_eval(k, x, y)))


@pytest.mark.parametrize("kernel", [Kernel("linear"), Kernel("poly", degree=2), Kernel("poly", degree=3),
                                    Kernel("rbf", sigma=0.5), Kernel("erbf", sigma=1.0)],
                         ids=lambda k: k.label)
def test_gram_positive_semidefinite(kernel):
    r = np.random.default_rng(3)
    for _ in range(5):
        x = r.uniform(size=(25, 3))
        assert np.linalg.eigvalsh(kernel_matrix(kernel, x, x)).min() >= -1e-8


def test_sweep_structure():
    sweep = default_kernel_sweep()
    assert len(sweep) == 17
    assert sweep[9].kernel.family == "linear"
    labels = [c.kernel.label for c in sweep]
    assert labels == ["Anova(0)", "Anova(1)", "Anova(2)", "Anova(3)", "BSpline(0)", "BSpline(1)",
                      "ERBF(1)", "ERBF(2)", "ERBF(3)", "Linear", "Poly(1)", "Poly(2)", "Poly(3)",
                      "RBF(5)", "RBF(6)", "RBF(7)", "Spline"]
    assert all(c.kernel.scale is None and c.kernel.offset is None for c in sweep)
    assert {c.kernel.family for c in sweep} == set(FAMILIES)
    assert all((c.c, c.epsilon, c.kkt_tol, c.max_passes) == (10.0, 0.01, 1e-3, 10_000) for c in sweep)


def test_config_validation():
    k = Kernel("linear")
    for kwargs in ({"c": 0.0}, {"epsilon": -0.1}, {"kkt_tol": 0.0}, {"max_passes": 0}):
        with pytest.raises(ValueError):
            SvrConfig(k, **kwargs)


@pytest.mark.parametrize("config", default_kernel_sweep(), ids=lambda c: c.kernel.label)
def test_constant_target(config):
    x = np.random.default_rng(1).uniform(size=(15, 3))
    model = svr_train(config, patterns_from(x, np.full(15, 0.42)))
    assert model.dual_coefficients.size == 0
    assert model.b == 0.42
    assert model.training_error == 0.0
    np.testing.assert_array_equal(svr_predict(model, x), 0.42)


def test_three_point_toy():
    x = np.array([0.0, 1.0, 2.0])
    model = svr_train(SvrConfig(Kernel("linear"), c=10, epsilon=0.01), patterns_from(x, x))
    pred = svr_predict(model, x[:, None])[:, 0]
    nz = x != 0
    assert percentage_error(pred[nz], x[nz]) < 1.0
    assert np.abs(pred - x).max() <= 0.01 + 1e-3


def test_predict_examples():
    cfg = SvrConfig(Kernel("linear"))
    empty = SvrModel(np.zeros((0, 2)), np.zeros(0), 1.5, cfg, n_features=2)
    np.testing.assert_array_equal(svr_predict(empty, np.ones((3, 2))), 1.5)
    sv = np.array([[0.5, -2.0]])
    one = SvrModel(sv, np.array([1.0]), 0.0, cfg)
    x = np.array([[1.0, 1.0], [3.0, 0.5]])
    np.testing.assert_allclose(svr_predict(one, x)[:, 0], x @ sv[0])
    with pytest.raises(ShapeError):
        svr_predict(one, np.ones((1, 3)))


def random_instance(r, kernel):
    n = int(r.integers(5, 21))
    d = int(r.integers(1, 5))
    x = r.uniform(size=(n, d))
    y = r.uniform(size=n)
    c = float(r.choice([0.5, 1.0, 10.0]))
    eps = float(r.choice([0.0, 0.01, 0.1]))
    return x, y, c, eps


@pytest.mark.parametrize("index", range(len(ALL_KERNELS)), ids=lambda i: ALL_KERNELS[i].label)
def test_matches_qp_oracle(index):
    kernel = ALL_KERNELS[index]
    r = np.random.default_rng(100 + index)
    x, y, c, eps = random_instance(r, kernel)
    g = kernel_matrix(kernel, x, x)
    sol = solve_dual(g, y, c, eps, 1e-9, 10**6)
    assert sol.converged
    ours = dual_objective(g, y, sol.coefficients, float(np.sum(sol.alpha + sol.alpha_star)), eps)
    oracle, _ = qp_oracle.solve(g, y, c, eps)
    assert abs(ours - oracle) <= 1e-6 * max(1.0, abs(oracle))


def test_oracle_projection_is_feasible():
    r = np.random.default_rng(0)
    z = np.concatenate([np.ones(6), -np.ones(6)])
    for _ in range(20):
        v = qp_oracle.project(r.normal(0, 3, 12), 2.0, z)
        assert v.min() >= 0 and v.max() <= 2.0
        assert abs(z @ v) < 1e-12


@pytest.mark.parametrize("kernel", [Kernel("linear"), Kernel("rbf", sigma=0.5), Kernel("spline")],
                         ids=lambda k: k.label)
def test_trained_model_invariants_and_kkt(kernel):
    r = np.random.default_rng(11)
    x = r.uniform(size=(60, 2))
    y = np.sin(4 * x[:, 0]) * 0.4 + 0.5 * x[:, 1] + r.normal(0, 0.05, 60)
    cfg = SvrConfig(kernel, c=1.0, epsilon=0.05, kkt_tol=1e-3)
    model = svr_train(cfg, patterns_from(x, y))
    assert model.converged and model.kkt_violation < cfg.kkt_tol
    assert np.all(np.abs(model.dual_coefficients) <= cfg.c)
    assert np.all(model.dual_coefficients != 0)
    assert abs(model.dual_coefficients.sum()) <= cfg.kkt_tol
    assert kkt_report(model, x, y) <= cfg.kkt_tol


def test_non_convergence_flagged():
    r = np.random.default_rng(2)
    x = r.uniform(size=(40, 2))
    y = r.uniform(size=40)
    model = svr_train(SvrConfig(Kernel("rbf", sigma=0.3), c=100.0, epsilon=0.0, kkt_tol=1e-12,
                                max_passes=1), patterns_from(x, y))
    assert not model.converged
    assert model.kkt_violation >= 1e-12
    assert model.iterations == 40


def test_training_deterministic():
    r = np.random.default_rng(5)
    x = r.uniform(size=(30, 3))
    p = patterns_from(x, x.sum(axis=1) / 3)
    cfg = SvrConfig(Kernel("poly", degree=2))
    a, b = svr_train(cfg, p), svr_train(cfg, p)
    np.testing.assert_array_equal(a.dual_coefficients, b.dual_coefficients)
    assert a.b == b.b
