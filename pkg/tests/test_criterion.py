import math

import mpmath
import numpy as np
import pytest

from nldoe.core import Design, DesignRegion, hybrid_model, second_order_polynomial
from nldoe.criterion import (
    InfoMatrix,
    RatioFunction,
    apply_exchange,
    exchange_ratio,
    exchange_ratios,
    information_matrix,
    log_det,
    model_matrix,
    phi,
    relative_efficiency,
)
from nldoe.errors import DomainError, SingularDesignError
from nldoe.expr import ExprModel
from nldoe.reference import EXAMPLE2_PRIOR

mpmath.mp.dps = 40


def mp_det(F):
    """Exact-ish |F'F| from a 40-digit oracle."""
    A = mpmath.matrix(F.tolist())
    return mpmath.det(A.T * A)


# ---------------------------------------------------------------------------
# model matrix and log-determinant
# ---------------------------------------------------------------------------


def test_model_matrix_of_linear_model():
    m = ExprModel("th0 + th1*x", ["th0", "th1"], ["x"])
    region = DesignRegion.from_bounds(("x",), [(0.0, 1.0)])
    F = model_matrix(m, Design([[0.0], [1.0]], region), [3.0, -7.0])
    assert F.tolist() == [[1.0, 0.0], [1.0, 1.0]]


def test_model_matrix_reports_run_index():
    m = ExprModel("a*log(x)", ["a"], ["x"])
    region = DesignRegion.from_bounds(("x",), [(-1.0, 1.0)])
    with pytest.raises(DomainError, match="run 2"):
        model_matrix(m, Design([[0.5], [0.0]], region), [1.0])


def test_log_det_identity():
    assert log_det(np.eye(2)) == 0.0


def test_log_det_matches_oracle(rng):
    for _ in range(50):
        F = rng.normal(size=(12, 5)) * rng.uniform(0.01, 100, size=5)
        assert log_det(F) == pytest.approx(float(mpmath.log(mp_det(F))), abs=1e-9)


def test_log_det_singular_cases():
    assert log_det(np.ones((3, 4))) == -math.inf  # n < p
    F = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    assert log_det(F) == -math.inf  # rank deficient
    assert log_det(1e-160 * np.eye(2)) == -math.inf  # determinant below the floor
    assert log_det(np.zeros((4, 2))) == -math.inf


def test_phi_is_permutation_invariant(rng):
    model = hybrid_model()
    region = DesignRegion.from_bounds(("S", "E", "P"), [(2.5, 7.5), (0.625, 62.5), (200, 400)])
    rows = rng.uniform(region.lower, region.upper, size=(18, 3))
    base = phi(model, Design(rows, region), EXAMPLE2_PRIOR.values)
    for _ in range(10):
        perm = rng.permutation(18)
        assert phi(model, Design(rows[perm], region), EXAMPLE2_PRIOR.values) == base


def test_poly_design_with_too_few_runs_is_singular():
    m = second_order_polynomial(3)
    region = DesignRegion.from_bounds(("x1", "x2", "x3"), [(-1, 1)] * 3)
    d = Design(np.random.default_rng(0).uniform(-1, 1, size=(9, 3)), region)
    assert phi(m, d, np.zeros(10)) == -math.inf


# ---------------------------------------------------------------------------
# exchange ratio
# ---------------------------------------------------------------------------


def test_identity_exchange_ratio_is_one(rng):
    F = rng.normal(size=(10, 4))
    info = InfoMatrix.from_model_matrix(F)
    assert exchange_ratio(info, F[3], F[3]) == pytest.approx(1.0, abs=1e-14)


def test_exchange_ratio_matches_brute_force_determinants(rng):
    worst = 0.0
    for _ in range(500):
        F = rng.normal(size=(10, 4))
        info = InfoMatrix.from_model_matrix(F)
        i = rng.integers(10)
        fn = rng.normal(size=4) * rng.uniform(0.1, 3.0)
        G = F.copy()
        G[i] = fn
        oracle = mp_det(G) / mp_det(F)
        d = exchange_ratio(info, F[i], fn)
        worst = max(worst, float(abs((d - oracle) / oracle)))
        assert exchange_ratios(info, F[i], fn[None, :])[0] == pytest.approx(d, rel=1e-12)
        assert RatioFunction(info, F[i])(fn) == pytest.approx(d, rel=1e-12)
    assert worst < 1e-10


def test_removing_essential_row_of_saturated_design():
    F = np.eye(4) + 0.1
    info = InfoMatrix.from_model_matrix(F)
    d = exchange_ratio(info, F[0], F[1])
    assert math.isfinite(d) and d < 1.0
    assert d == pytest.approx(0.0, abs=1e-12)


def test_singular_information_matrix_is_rejected():
    with pytest.raises(SingularDesignError):
        InfoMatrix.from_model_matrix(np.ones((5, 2)))
    with pytest.raises(SingularDesignError):
        InfoMatrix.from_model_matrix(np.eye(3)[:2])


# ---------------------------------------------------------------------------
# applying exchanges
# ---------------------------------------------------------------------------


def test_identity_exchange_leaves_matrix_unchanged(rng):
    F = rng.normal(size=(8, 3))
    info = InfoMatrix.from_model_matrix(F)
    new = apply_exchange(info, F[2], F[2].copy())
    np.testing.assert_allclose(new.M, info.M, atol=1e-14, rtol=0)


def test_apply_exchange_matches_rebuild(rng):
    F = rng.normal(size=(12, 5))
    info = InfoMatrix.from_model_matrix(F)
    for _ in range(30):
        i = rng.integers(12)
        fn = rng.normal(size=5)
        d = exchange_ratio(info, F[i], fn)
        if d <= 1.0:
            continue
        info = apply_exchange(info, F[i], fn, d)
        F[i] = fn
        assert info.logdet == pytest.approx(log_det(F), abs=1e-8)
        np.testing.assert_allclose(info.M, information_matrix(F), atol=1e-10)


def test_long_exchange_sequence_keeps_inverse_accurate(rng):
    F = rng.normal(size=(15, 6))
    info = InfoMatrix.from_model_matrix(F)
    done = 0
    while done < 200:
        i = rng.integers(15)
        fn = rng.normal(size=6) * rng.uniform(0.5, 2.0)
        d = exchange_ratio(info, F[i], fn)
        if d <= 0.2:
            continue
        info = apply_exchange(info, F[i], fn, d)
        F[i] = fn
        done += 1
        assert info.updates < 50
        assert np.max(np.abs(info.M @ info.Minv - np.eye(6))) < 1e-6
    assert info.logdet == pytest.approx(log_det(F), abs=1e-9)


def test_exchange_to_singular_matrix_signals():
    F = np.eye(3)
    info = InfoMatrix.from_model_matrix(F)
    with pytest.raises(SingularDesignError):
        apply_exchange(info, F[0], F[1])


def test_info_matrix_is_immutable(rng):
    info = InfoMatrix.from_model_matrix(rng.normal(size=(6, 3)))
    with pytest.raises(ValueError):
        info.M[0, 0] = 1.0
    with pytest.raises(Exception):
        info.logdet = 0.0


# ---------------------------------------------------------------------------
# relative efficiency
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("value", [-52.7712, 0.0, 41.2, 1e3])
@pytest.mark.parametrize("p", [1, 6, 10])
def test_efficiency_of_equal_designs_is_exactly_100(value, p):
    assert relative_efficiency(value, value, p) == 100.0


def test_efficiency_examples():
    assert relative_efficiency(-52.7712, -49.5528, 6) == pytest.approx(58.48, abs=0.01)
    assert relative_efficiency(38.8433, 41.2246, 6) == pytest.approx(67.24, abs=0.01)
    with pytest.raises(ValueError):
        relative_efficiency(0.0, 0.0, 0)
