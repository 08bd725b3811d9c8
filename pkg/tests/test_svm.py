import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import kkt_gap, qp_oracle
from wavedet.errors import ParameterError, TrainingError
from wavedet.svm import (KernelSpec, SvmModel, TrainConfig, classify, decision_value, dual_objective,
                         kernel_eval, model_dual_objective, smo_solve, train)

TIGHT = dict(kkt_tol=1e-8)


def test_kernel_values():
    assert kernel_eval(KernelSpec.linear(), [1, 2], [3, 4]) == 11
    assert kernel_eval(KernelSpec.poly(2, 1.0), [1, 2], [3, 4]) == 144
    assert kernel_eval(KernelSpec.poly(2, 1.0), [0, 0], [7, -3]) == 1
    with pytest.raises(ParameterError):
        kernel_eval(KernelSpec.linear(), [1, 2], [1, 2, 3])
    with pytest.raises(ParameterError):
        KernelSpec("rbf")
    with pytest.raises(ParameterError):
        KernelSpec.poly(0)


def test_kernel_gram_is_psd(rng):
    x = rng.normal(size=(15, 4))
    for k in (KernelSpec.linear(), KernelSpec.poly(2), KernelSpec.poly(3, 0.5)):
        g = k.gram(x, x)
        np.testing.assert_allclose(g, g.T)
        assert np.linalg.eigvalsh(g).min() > -1e-9 * np.abs(g).max()


def test_train_config_rejects():
    for bad in (dict(c_plus=0), dict(c_minus=-1), dict(kkt_tol=0), dict(max_passes=0)):
        with pytest.raises(ParameterError):
            TrainConfig(**bad)
    assert TrainConfig(1, 4).swapped() == TrainConfig(4, 1)


def test_two_point_margin():
    model = train([[1.0], [-1.0]], [1, -1], TrainConfig(1e3, 1e3, **TIGHT))
    assert abs(model.bias) < 1e-6
    assert abs(decision_value(model, [1.0]) - 1) < 1e-6
    assert abs(decision_value(model, [-1.0]) + 1) < 1e-6
    assert abs(decision_value(model, [0.0])) < 1e-6
    # closed form 2a - 2a^2 at a = 1/2
    assert abs(model_dual_objective(model) - 0.5) < 1e-9


def test_dual_objective_closed_form():
    x = np.array([[1.0], [-1.0]])
    y = np.array([1.0, -1.0])
    for a in (0.0, 0.3, 0.5, 2.0):
        assert math.isclose(dual_objective(x, y, [a, a], KernelSpec.linear()), 2 * a - 2 * a * a,
                            abs_tol=1e-15)


def test_xor_poly2():
    base = np.array([[1, 1], [-1, -1], [1, -1], [-1, 1]], float)
    x = np.vstack([base, 2 * base])
    y = np.array([1, 1, -1, -1] * 2, float)
    cfg = TrainConfig(10.0, 10.0, **TIGHT)
    model = train(x, y, cfg, KernelSpec.poly(2))
    assert np.all(np.sign(model.decision_values(x)) == y)
    gram = KernelSpec.poly(2).gram(x, x)
    _, best = qp_oracle(gram, y, np.full(8, 10.0))
    assert abs(model_dual_objective(model) - best) < 1e-6


def test_heavy_negative_penalty_protects_outlier():
    x = np.array([[-2.0], [-1.0], [0.0], [1.0], [2.0], [0.5], [1.5], [0.8]])
    y = np.array([-1, -1, -1, 1, 1, 1, 1, -1], float)  # x=0.8 is the noise outlier
    model = train(x, y, TrainConfig(1.0, 1e6, **TIGHT))
    assert not classify(model, [0.8])
    relaxed = train(x, y, TrainConfig(1.0, 1.0, **TIGHT))
    assert classify(relaxed, [0.8])


def test_classify_threshold_convention():
    model = SvmModel(np.zeros((0, 2)), np.zeros(0), 0.5, KernelSpec.linear(), 2)
    assert decision_value(model, [3.0, -1.0]) == 0.5
    assert not classify(model, [0.0, 0.0], 0.5)
    assert classify(model, [0.0, 0.0], -math.inf)
    assert classify(model, [0.0, 0.0])


def test_free_support_vectors_on_margin(rng):
    x = np.vstack([rng.normal(1.5, 1, (30, 2)), rng.normal(-1.5, 1, (30, 2))])
    y = np.r_[np.ones(30), -np.ones(30)]
    cfg = TrainConfig(1.0, 4.0, kkt_tol=1e-3)
    model = train(x, y, cfg)
    c = np.where(model.coefficients > 0, cfg.c_plus, cfg.c_minus)
    free = model.alphas < c * (1 - 1e-9)
    assert free.any()
    f = model.decision_values(model.support_vectors[free])
    np.testing.assert_allclose(np.abs(f), 1.0, atol=cfg.kkt_tol)
    model.check_constraints()


def test_smo_matches_oracle_random_sets(rng):
    for trial in range(10):
        x = rng.normal(size=(10, 3))
        y = np.where(rng.random(10) < 0.5, 1.0, -1.0)
        y[:2] = [1, -1]
        kernel = KernelSpec.poly(2) if trial % 2 else KernelSpec.linear()
        cfg = TrainConfig(1.0, 4.0, kkt_tol=1e-6)
        alpha, bias, it, gap = smo_solve(x, y, cfg, kernel)
        c = np.where(y > 0, 1.0, 4.0)
        gram = kernel.gram(x, x)
        _, best = qp_oracle(gram, y, c)
        assert abs(dual_objective(x, y, alpha, kernel) - best) <= 1e-6
        assert abs(alpha @ y) < 1e-10
        assert kkt_gap(gram * np.outer(y, y), y, c, alpha) < 1e-6


def test_separable_gets_perfect_training_accuracy(rng):
    x = np.vstack([rng.normal(3, 0.5, (20, 2)), rng.normal(-3, 0.5, (20, 2))])
    y = np.r_[np.ones(20), -np.ones(20)]
    model = train(x, y, TrainConfig(100.0, 100.0))
    assert np.all(np.sign(model.decision_values(x)) == y)
    # linear weights agree with the kernel expansion
    np.testing.assert_allclose(model.decision_values(x), x @ model.weights() + model.bias)


def test_training_errors():
    with pytest.raises(TrainingError):
        train([[0.0], [1.0]], [1, 1])
    with pytest.raises(ParameterError):
        train([[np.nan], [1.0]], [1, -1])
    with pytest.raises(ParameterError):
        train([[0.0], [1.0]], [1, 0])
    with pytest.raises(ParameterError):
        train([[0.0], [1.0]], [1])


def test_weights_only_for_linear(rng):
    x = rng.normal(size=(6, 2))
    model = train(x, [1, 1, 1, -1, -1, -1], kernel=KernelSpec.poly(2))
    with pytest.raises(ParameterError):
        model.weights()


def test_model_roundtrip(tmp_path, rng):
    x = rng.normal(size=(20, 3))
    y = np.where(x[:, 0] > 0, 1.0, -1.0)
    model = train(x, y, kernel=KernelSpec.poly(2, 0.5))
    model.save(tmp_path / "m.json")
    back = SvmModel.load(tmp_path / "m.json")
    probe = rng.normal(size=(7, 3))
    np.testing.assert_array_equal(back.decision_values(probe), model.decision_values(probe))
    assert back.kernel == model.kernel and back.c_minus == model.c_minus


def test_deterministic(rng):
    x = rng.normal(size=(30, 2))
    y = np.where(x[:, 0] + 0.3 * rng.normal(size=30) > 0, 1.0, -1.0)
    a = train(x, y, seed=1)
    b = train(x, y, seed=2)
    np.testing.assert_array_equal(a.coefficients, b.coefficients)
    assert a.bias == b.bias


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1.0, 4.0, 1e6]))
def test_box_and_equality_constraints(seed, ratio):
    r = np.random.default_rng(seed)
    n = int(r.integers(4, 16))
    x = r.normal(size=(n, 2))
    y = np.where(r.random(n) < 0.5, 1.0, -1.0)
    y[:2] = [1, -1]
    cfg = TrainConfig(1.0, ratio)
    alpha, _, _, gap = smo_solve(x, y, cfg, KernelSpec.linear())
    c = np.where(y > 0, 1.0, ratio)
    assert np.all(alpha >= 0) and np.all(alpha <= c)
    assert abs(alpha @ y) <= 1e-9 * max(1.0, alpha.max())
    assert gap < cfg.kkt_tol
