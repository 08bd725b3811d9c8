"""The reference oracles are checked against closed forms and scipy before use."""
import numpy as np
import pytest
from scipy import optimize, stats

from oracles import clopper_pearson, kkt_gap, project_box_hyperplane, qp_oracle


def test_projection_against_scipy(rng):
    for _ in range(20):
        n = rng.integers(2, 9)
        y = rng.choice([-1.0, 1.0], n)
        y[0], y[1] = 1.0, -1.0
        c = rng.uniform(0.5, 3.0, n)
        v = rng.normal(0, 2, n)
        p = project_box_hyperplane(v, y, c)
        res = optimize.minimize(lambda a: 0.5 * np.sum((a - v) ** 2), np.clip(v, 0, c), jac=lambda a: a - v,
                                bounds=list(zip(np.zeros(n), c)),
                                constraints=[{"type": "eq", "fun": lambda a: a @ y, "jac": lambda a: y}],
                                method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        assert abs(p @ y) < 1e-10
        assert np.all(p >= 0) and np.all(p <= c)
        np.testing.assert_allclose(p, res.x, atol=1e-6)


def test_qp_oracle_two_point_closed_form():
    # x = +-1, linear kernel: dual is 2a - 2a^2, optimum a = 1/2 when C allows it
    gram = np.array([[1.0, -1.0], [-1.0, 1.0]])
    y = np.array([1.0, -1.0])
    a, obj = qp_oracle(gram, y, np.array([10.0, 10.0]))
    np.testing.assert_allclose(a, [0.5, 0.5], atol=1e-9)
    assert abs(obj - 0.5) < 1e-12
    a, obj = qp_oracle(gram, y, np.array([0.2, 0.2]))
    np.testing.assert_allclose(a, [0.2, 0.2], atol=1e-12)
    assert abs(obj - (0.4 - 0.08)) < 1e-12


def test_qp_oracle_against_scipy(rng):
    for _ in range(10):
        n = 8
        x = rng.normal(size=(n, 2))
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        y[:2] = [1, -1]
        gram = (x @ x.T + 1) ** 2
        c = np.where(y > 0, 1.0, 4.0)
        q = gram * np.outer(y, y)
        a, obj = qp_oracle(gram, y, c)
        assert kkt_gap(q, y, c, a) < 1e-9
        res = optimize.minimize(lambda al: 0.5 * al @ q @ al - al.sum(), np.zeros(n),
                                jac=lambda al: q @ al - 1, bounds=list(zip(np.zeros(n), c)),
                                constraints=[{"type": "eq", "fun": lambda al: al @ y, "jac": lambda al: y}],
                                method="SLSQP", options={"ftol": 1e-15, "maxiter": 1000})
        assert obj >= -res.fun - 1e-9
        assert abs(obj + res.fun) < 1e-6


@pytest.mark.parametrize("k,n", [(0, 50), (3, 1000), (100, 100000), (50, 50)])
def test_clopper_pearson_against_binomial_tails(k, n):
    lo, hi = clopper_pearson(k, n)
    if k > 0:
        assert abs(stats.binom.sf(k - 1, n, lo) - 0.025) < 1e-9
    else:
        assert lo == 0.0
    if k < n:
        assert abs(stats.binom.cdf(k, n, hi) - 0.025) < 1e-9
    else:
        assert hi == 1.0
