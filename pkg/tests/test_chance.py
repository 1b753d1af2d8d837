import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vorhc.chance import (
    GaussianVelocity, ProbabilityBudget, composite_delta, deterministic_constraint, inverse_erf, kappa,
    split_budget,
)
from vorhc.errors import DomainError

# mpmath at 30 digits
ERFINV_08 = 0.9061938024368232
KAPPA_DEFAULT = 0.2865636417229004
DEFAULT_VELOCITY_COVARIANCE = np.diag([0.05, 0.05])


def test_inverse_erf_examples():
    assert inverse_erf(0.0) == 0.0
    assert inverse_erf(0.8) == pytest.approx(ERFINV_08, abs=1e-15)
    assert inverse_erf(-0.8) == -inverse_erf(0.8)


@pytest.mark.parametrize("y", [1.0, -1.0, 1.5, math.nan])
def test_inverse_erf_domain(y):
    with pytest.raises(DomainError):
        inverse_erf(y)


def test_inverse_erf_against_mpmath_grid():
    mpmath.mp.dps = 30
    ys = np.concatenate([np.linspace(-0.999999, 0.999999, 801), [1e-300, 1 - 1e-15, -(1 - 1e-12)]])
    worst = max(abs(inverse_erf(float(y)) - float(mpmath.erfinv(mpmath.mpf(float(y))))) for y in ys)
    assert worst < 1e-12


@given(st.floats(-0.999, 0.999))
def test_inverse_erf_round_trip(y):
    assert math.erf(inverse_erf(y)) == pytest.approx(y, abs=1e-12)


def test_kappa_examples():
    assert kappa([1.0, 0.0], DEFAULT_VELOCITY_COVARIANCE, 0.1) == pytest.approx(KAPPA_DEFAULT, abs=1e-12)
    assert kappa([1.0, 0.0], DEFAULT_VELOCITY_COVARIANCE, 0.5) == 0.0
    assert kappa([2.0, 0.0], DEFAULT_VELOCITY_COVARIANCE, 0.1) == pytest.approx(2 * KAPPA_DEFAULT, rel=1e-14)


@pytest.mark.parametrize("delta", [0.0, -0.1, 0.51, 1.0])
def test_kappa_domain(delta):
    with pytest.raises(DomainError):
        kappa([1.0, 0.0], DEFAULT_VELOCITY_COVARIANCE, delta)


def test_kappa_batches():
    normals = np.array([[1.0, 0.0], [0.0, 2.0], [0.6, 0.8]])
    batch = kappa(normals, DEFAULT_VELOCITY_COVARIANCE, 0.1)
    assert batch.shape == (3,)
    for n, k in zip(normals, batch):
        assert k == pytest.approx(kappa(n, DEFAULT_VELOCITY_COVARIANCE, 0.1), rel=1e-15)


@given(st.floats(0.01, 0.49), st.floats(0.001, 0.5))
def test_kappa_decreases_in_delta(delta, step):
    lo = min(delta + step, 0.5)
    if lo > delta:
        assert kappa([0.3, 0.4], DEFAULT_VELOCITY_COVARIANCE, lo) < kappa([0.3, 0.4], DEFAULT_VELOCITY_COVARIANCE, delta)


@given(st.floats(0.001, 1.0), st.floats(0.001, 1.0), st.floats(0.01, 1.0), st.floats(0, 2 * math.pi))
def test_kappa_increases_with_each_eigenvalue(l1, l2, bump, th):
    c, s = math.cos(th), math.sin(th)
    v = np.array([[c, -s], [s, c]])
    n = np.array([0.7, -0.3])
    base = v @ np.diag([l1, l2]) @ v.T
    # a bump only grows kappa if the normal has a component along that eigenvector
    for i in range(2):
        if abs(n @ v[:, i]) > 1e-3:
            grown = v @ np.diag([l1 + bump * (i == 0), l2 + bump * (i == 1)]) @ v.T
            assert kappa(n, grown, 0.1) > kappa(n, base, 0.1)


def test_deterministic_constraint_examples():
    host = GaussianVelocity([1.0, 0.0], DEFAULT_VELOCITY_COVARIANCE)
    con = deterministic_constraint([1.0, 0.0], [0.0, 0.0], host, 0.1)
    assert con.margin == pytest.approx(KAPPA_DEFAULT, abs=1e-12)
    assert con.satisfied(host.mean)
    assert not con.satisfied([0.2, 0.0])
    zero = deterministic_constraint([1.0, 0.0], [0.0, 0.0], GaussianVelocity([0.0, 0.0], np.zeros((2, 2))), 0.1)
    assert zero.margin == 0.0
    assert zero.satisfied([0.0, 0.0]) and not zero.satisfied([-1e-12, 0.0])


def test_gaussian_velocity_validates_covariance():
    with pytest.raises(DomainError):
        GaussianVelocity([0, 0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(DomainError):
        GaussianVelocity([0, 0], np.diag([1.0, -1.0]))
    clamped = GaussianVelocity([0, 0], np.diag([1.0, -1e-14]))
    assert np.linalg.eigvalsh(clamped.covariance).min() >= 0.0


def test_lemma_violation_rate_small_sample():
    rng = np.random.default_rng(7)
    cov = np.array([[0.05, 0.01], [0.01, 0.03]])
    n = np.array([0.6, -0.8])
    delta = 0.1
    k = kappa(n, cov, delta)
    mean = n * k / (n @ n)  # constraint n.v >= kappa met with equality
    samples = rng.multivariate_normal(mean, cov, size=200_000)
    rate = np.mean(samples @ n < 0.0)
    se = math.sqrt(delta * (1 - delta) / len(samples))
    assert abs(rate - delta) < 4 * se


@pytest.mark.parametrize("edge,expected", [(0.01, 0.1), (0.25, 0.5), (0.04, 0.2)])
def test_split_budget(edge, expected):
    d1, d2 = split_budget(edge)
    assert d1 == pytest.approx(expected, rel=1e-15) and d2 == d1


@pytest.mark.parametrize("edge", [0.0, 0.26, -0.1])
def test_split_budget_domain(edge):
    with pytest.raises(DomainError):
        split_budget(edge)


def test_composite_delta_examples():
    budget = ProbabilityBudget.uniform(6)
    assert composite_delta(budget, 0) == pytest.approx(0.0490099501, abs=1e-12)
    assert composite_delta(ProbabilityBudget({(0, 1): (0.1, 0.1)}), 0) == pytest.approx(0.01)
    assert composite_delta(ProbabilityBudget({(1, 0): (0.1, 0.1)}), 0) == 0.0
    assert set(budget.composite) == set(range(6))


@given(st.lists(st.tuples(st.floats(0.001, 0.5), st.floats(0.001, 0.5)), min_size=1, max_size=10))
def test_composite_delta_below_union_bound(pairs):
    budget = ProbabilityBudget({(0, j + 1): p for j, p in enumerate(pairs)})
    total = sum(a * b for a, b in pairs)
    comp = composite_delta(budget, 0)
    assert comp <= total + 1e-15
    # first-order agreement: the gap is bounded by the pairwise products
    assert total - comp <= 0.5 * total**2 + 1e-15
