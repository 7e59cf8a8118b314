import math

import numpy as np
import pytest

from nldoe.core import hybrid_model
from nldoe.errors import DomainError
from nldoe.expr import ExprModel
from nldoe.io import read_data_csv
from nldoe.optim import NmOptions, nls_fit, nm_descent, nm_minimize, sse
from nldoe.reference import EXAMPLE2_PRIOR, conversion_transform

from conftest import DATA

# Independent least-squares solution for the conversion data, from a
# trust-region solver (scipy.optimize.least_squares, xtol=ftol=gtol=1e-15).
CONVERSION_LSQ_THETA = np.array([0.43403, 1.31401, -0.10592, -0.82238, 0.41052, -2.06331])
CONVERSION_LSQ_SSE = 6.4523466


def rosenbrock(x):
    return (x[0] - 1.0) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2


# ---------------------------------------------------------------------------
# Nelder-Mead
# ---------------------------------------------------------------------------


def test_interior_minimum():
    x, f = nm_minimize(lambda x: (x[0] - 2.0) ** 2, [0.0], [(-10.0, 10.0)])
    assert x[0] == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("start", [-10.0, -3.0, 0.0, 9.99, 10.0])
def test_boundary_minimum(start):
    x, f = nm_minimize(lambda x: (x[0] - 20.0) ** 2, [start], [(-10.0, 10.0)])
    assert x[0] == pytest.approx(10.0, abs=1e-6)


def test_rosenbrock():
    x, f = nm_minimize(rosenbrock, [-1.0, 1.0], [(-5.0, 5.0)] * 2, NmOptions(max_evals=20000, x_tol=1e-12,
                                                                          f_tol=1e-16))
    assert f < 1e-8
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-3)


def test_options_validation():
    for bad in [dict(reflection=0), dict(expansion=1), dict(contraction=1), dict(shrink=0),
                dict(x_tol=0), dict(max_evals=0)]:
        with pytest.raises(ValueError):
            NmOptions(**bad)


def test_start_outside_bounds_is_rejected():
    with pytest.raises(ValueError):
        nm_minimize(lambda x: 0.0, [11.0], [(-10.0, 10.0)])
    with pytest.raises(ValueError):
        nm_minimize(lambda x: 0.0, [0.0], [(-10.0, 10.0)], extra_starts=[[12.0]])


def test_evaluation_error_at_start_propagates():
    def f(x):
        raise DomainError("bad", "f", x[0])

    with pytest.raises(DomainError):
        nm_minimize(f, [0.0], [(-1.0, 1.0)])


def test_failed_evaluations_elsewhere_count_as_infinite():
    def f(x):
        if x[0] > 0.5:
            raise DomainError("bad", "f", x[0])
        return -x[0]

    x, fx = nm_minimize(f, [0.0], [(-1.0, 1.0)])
    assert x[0] <= 0.5 and fx == -x[0]
    assert x[0] > 0.49


def test_extra_starts_find_other_basin():
    # two wells; the deeper one is only reached from the extra start
    f = lambda x: min((x[0] + 5) ** 2 + 1.0, (x[0] - 5) ** 2)  # noqa: E731
    x, fx = nm_minimize(f, [-6.0], [(-10.0, 10.0)])
    assert x[0] == pytest.approx(-5.0, abs=1e-5)
    x, fx = nm_minimize(f, [-6.0], [(-10.0, 10.0)], extra_starts=[[6.0]])
    assert x[0] == pytest.approx(5.0, abs=1e-5) and fx < 1e-10


def test_feasibility_descent_and_determinism(rng):
    for _ in range(50):
        d = int(rng.integers(1, 5))
        lo = rng.uniform(-5, 0, d)
        hi = lo + rng.uniform(0.1, 5, d)
        centre = rng.uniform(-8, 8, d)
        weights = rng.uniform(0.1, 10, d)

        seen = []

        def f(x):
            assert np.all(x >= lo) and np.all(x <= hi)
            seen.append(1)
            return float(np.sum(weights * (x - centre) ** 2) + np.sin(3 * x).sum())

        x0 = rng.uniform(lo, hi)
        bounds = list(zip(lo, hi))
        x1, f1 = nm_minimize(f, x0, bounds)
        x2, f2 = nm_minimize(f, x0, bounds)
        assert np.all(x1 >= lo) and np.all(x1 <= hi)
        assert f1 <= f(x0)
        assert np.array_equal(x1, x2) and f1 == f2


def test_max_evals_is_respected():
    calls = []
    res = nm_descent(lambda x: calls.append(1) or rosenbrock(x), [-1.0, 1.0], [(-5, 5)] * 2,
                     NmOptions(max_evals=30))
    assert res.evals <= 30 + 2 and not res.converged


# ---------------------------------------------------------------------------
# least squares
# ---------------------------------------------------------------------------


def test_exact_linear_fit():
    m = ExprModel("th0 + th1*x", ["th0", "th1"], ["x"])
    res = nls_fit(m, [[0.0], [1.0]], [1.0, 3.0], [0.0, 0.0])
    np.testing.assert_allclose(res.theta_hat, [1.0, 2.0], atol=1e-6)
    assert res.sse < 1e-12


def test_too_few_rows():
    m = hybrid_model()
    X, y = read_data_csv(DATA / "ex2_conversion_data.csv", m.factors, "xi")
    with pytest.raises(ValueError):
        nls_fit(m, X[:5], y[:5], EXAMPLE2_PRIOR.values)


def _conversion_data():
    m = hybrid_model()
    X, y = read_data_csv(DATA / "ex2_conversion_data.csv", m.factors, "xi")
    return m, X, y


def test_conversion_data_has_one_missing_response():
    m, X, y = _conversion_data()
    assert X.shape == (18, 3)
    assert np.isnan(y[15]) and np.isfinite(np.delete(y, 15)).all()


@pytest.mark.parametrize("init", [np.zeros(6) + np.eye(6)[5] * -1.0, EXAMPLE2_PRIOR.values])
def test_conversion_fit(init):
    m, X, y = _conversion_data()
    res = nls_fit(m, X, y, init, conversion_transform)
    np.testing.assert_allclose(res.theta_hat, EXAMPLE2_PRIOR.values, atol=0.02)
    np.testing.assert_allclose(res.theta_hat, CONVERSION_LSQ_THETA, atol=2e-4)
    assert res.sse == pytest.approx(CONVERSION_LSQ_SSE, rel=1e-6)
    keep = np.isfinite(y)
    z = conversion_transform(y[keep])
    assert res.sse == pytest.approx(sse(m, X[keep], z, res.theta_hat), rel=1e-10)
    assert res.sse <= sse(m, X[keep], z, EXAMPLE2_PRIOR.values)
    assert res.converged


def test_conversion_fit_is_stationary():
    m, X, y = _conversion_data()
    keep = np.isfinite(y)
    X, z = X[keep], conversion_transform(y[keep])
    res = nls_fit(m, X, z, EXAMPLE2_PRIOR.values)
    for j in range(6):
        h = 1e-6 * max(1.0, abs(res.theta_hat[j]))
        e = np.eye(6)[j] * h
        g = (sse(m, X, z, res.theta_hat + e) - sse(m, X, z, res.theta_hat - e)) / (2 * h)
        assert abs(g) < 1e-3 * (1.0 + res.sse)


def test_fit_is_deterministic_for_a_seed():
    m, X, y = _conversion_data()
    a = nls_fit(m, X, y, EXAMPLE2_PRIOR.values, conversion_transform, seed=3)
    b = nls_fit(m, X, y, EXAMPLE2_PRIOR.values, conversion_transform, seed=3)
    assert np.array_equal(a.theta_hat, b.theta_hat) and a.sse == b.sse


def test_conversion_transform():
    assert conversion_transform(np.array([50.0]))[0] == 1.0
    assert math.isclose(conversion_transform(np.array([73.6]))[0], 73.6 / 26.4)


def test_conversion_fit_agrees_with_independent_solver():
    optimize = pytest.importorskip("scipy.optimize")
    m, X, y = _conversion_data()
    keep = np.isfinite(y)
    X, z = X[keep], conversion_transform(y[keep])
    ref = optimize.least_squares(lambda th: m.means(X, th) - z, np.eye(6)[5] * -1.0,
                                 xtol=1e-15, ftol=1e-15, gtol=1e-15)
    res = nls_fit(m, X, z, np.eye(6)[5] * -1.0)
    assert res.sse == pytest.approx(2 * ref.cost, rel=1e-7)
    np.testing.assert_allclose(res.theta_hat, ref.x, atol=1e-4)
