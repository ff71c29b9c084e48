import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stationforge.chance import (
    DomainError,
    ReliabilityLevel,
    StochasticParam,
    deterministic_lower,
    deterministic_upper,
    std_normal_cdf,
    std_normal_quantile,
)


def bisect_quantile(p, lo=-40.0, hi=40.0):
    """Oracle: bisection on the erfc-based CDF (lower tail) to machine precision."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(-mid / math.sqrt(2)) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_quantile_examples():
    assert std_normal_quantile(0.5) == pytest.approx(0.0, abs=1e-15)
    assert std_normal_quantile(0.2) == pytest.approx(-0.841621, abs=1e-6)
    assert std_normal_quantile(0.2) == pytest.approx(bisect_quantile(0.2), abs=1e-12)


@pytest.mark.parametrize("p", [1e-12, 1e-6, 0.001, 0.02, 0.02425, 0.1, 0.3, 0.49, 0.51, 0.9, 0.975, 0.999])
def test_quantile_matches_bisection(p):
    assert std_normal_quantile(p) == pytest.approx(bisect_quantile(p), abs=1e-9)


@settings(max_examples=300)
@given(st.floats(1e-6, 1 - 1e-6))
def test_quantile_symmetry_and_inverse(p):
    # below 1e-6, forming 1 - p in floating point already loses the digits being compared
    assert std_normal_quantile(p) == pytest.approx(-std_normal_quantile(1 - p), abs=1e-9)
    assert std_normal_cdf(std_normal_quantile(p)) == pytest.approx(p, abs=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_quantile_domain(p):
    with pytest.raises(DomainError):
        std_normal_quantile(p)


def test_reliability_level_domain():
    ReliabilityLevel(0.5)
    for eps in (0.0, 0.51, -1):
        with pytest.raises(DomainError):
            ReliabilityLevel(eps)


def test_threshold_examples():
    b = StochasticParam(10.0, 2.0)
    assert deterministic_lower(b, 0.2) == pytest.approx(11.6832, abs=1e-4)
    assert deterministic_upper(b, 0.2) == pytest.approx(8.3168, abs=1e-4)
    assert deterministic_lower(StochasticParam(3.0, 0.0), 0.1) == 3.0
    assert deterministic_upper(StochasticParam(3.0, 0.0), 0.1) == 3.0
    assert deterministic_lower(b, 0.5) == pytest.approx(10.0, abs=1e-12)


def test_two_quantile_forms_agree():
    # F^-1(1 - eps) written as mean + z_{1-eps} sigma equals mean - z_eps sigma
    for eps in (0.01, 0.05, 0.2, 0.4):
        assert 10 + std_normal_quantile(1 - eps) * 2 == pytest.approx(deterministic_lower(StochasticParam(10, 2), eps), abs=1e-9)


@settings(max_examples=100)
@given(st.floats(-50, 50), st.floats(0, 10), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_monotone_in_epsilon(mean, std, e1, e2):
    b = StochasticParam(mean, std)
    lo, hi = sorted((e1, e2))
    assert deterministic_lower(b, lo) >= deterministic_lower(b, hi) - 1e-12
    assert deterministic_upper(b, lo) <= deterministic_upper(b, hi) + 1e-12
    assert deterministic_upper(b, lo) <= mean + 1e-12 <= deterministic_lower(b, lo) + 2e-12


@pytest.mark.parametrize("eps", [0.05, 0.2, 0.4])
def test_monte_carlo_satisfaction(eps):
    rng = np.random.default_rng(7)
    b = StochasticParam(5.0, 1.5)
    x = rng.normal(5.0, 1.5, 100_000)
    assert abs(np.mean(x <= deterministic_lower(b, eps)) - (1 - eps)) <= 0.01
    assert abs(np.mean(x >= deterministic_upper(b, eps)) - (1 - eps)) <= 0.01


@pytest.mark.parametrize("eps", [0.05, 0.2, 0.4])
def test_empirical_matches_gaussian(eps):
    rng = np.random.default_rng(3)
    n, mu, sigma = 10_000, 10.0, 2.0
    emp = StochasticParam.from_samples(rng.normal(mu, sigma, n), "empirical")
    gau = emp.with_form("gaussian")
    z = std_normal_quantile(1 - eps)
    se = sigma * math.sqrt(eps * (1 - eps) / n) / (math.exp(-z * z / 2) / math.sqrt(2 * math.pi))
    assert abs(deterministic_lower(emp, eps) - deterministic_lower(gau, eps)) <= 3 * se
    assert abs(deterministic_upper(emp, eps) - deterministic_upper(gau, eps)) <= 3 * se


def test_nearest_rank_small_sample():
    b = StochasticParam.from_samples([1.0, 2.0, 3.0, 4.0, 5.0], "empirical")
    assert deterministic_lower(b, 0.2) == 4.0  # ceil(0.8 * 5) = 4th
    assert deterministic_upper(b, 0.2) == 1.0  # ceil(0.2 * 5) = 1st


def test_vectorised_thresholds():
    x = np.array([[1.0, 10.0], [3.0, 10.0]])
    b = StochasticParam.from_samples(x)
    assert b.std[1] == 0.0
    v = deterministic_lower(b, 0.2)
    assert v.shape == (2,) and v[1] == 10.0


def test_param_validation():
    with pytest.raises(ValueError):
        StochasticParam(0.0, -1.0)
    with pytest.raises(ValueError):
        StochasticParam(0.0, 1.0, None, "empirical")
