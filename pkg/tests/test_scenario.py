import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import truncnorm

from stationforge.core import ChargerSpec, PevSession, TimeGrid, aggregate, charging_envelope
from stationforge.scenario import (
    BehaviorModel,
    DegenerateModel,
    Scenario,
    TruncNormal,
    estimate_bound_distributions,
    sample_scenario,
    sample_scenarios,
)

G = TimeGrid()
C = ChargerSpec()


def test_no_pevs():
    sc = sample_scenario(BehaviorModel(n_pevs_per_day=0), G, 1)
    assert sc.sessions == () and sc.base_load.shape == (96,)


def test_same_seed_same_scenario():
    m = BehaviorModel(base_load_kw=20.0, base_load_noise_kw=3.0)
    assert sample_scenario(m, G, 42, C) == sample_scenario(m, G, 42, C)
    assert sample_scenario(m, G, 42, C) != sample_scenario(m, G, 43, C)


def test_truncated_normal_mean():
    d = TruncNormal(9.0, 1.0, 5.0, 13.0)
    x = d.sample(np.random.default_rng(0), 10_000)
    oracle = truncnorm.mean((5 - 9) / 1, (13 - 9) / 1, loc=9, scale=1)
    assert abs(x.mean() - oracle) < 0.05
    assert x.min() >= 5 and x.max() <= 13


def test_truncated_normal_skewed_mean():
    d = TruncNormal(0.45, 0.15, 0.05, 0.5)
    x = d.sample(np.random.default_rng(1), 20_000)
    oracle = truncnorm.mean((0.05 - 0.45) / 0.15, (0.5 - 0.45) / 0.15, loc=0.45, scale=0.15)
    assert d.theoretical_mean() == pytest.approx(oracle, abs=1e-12)
    assert abs(x.mean() - oracle) < 0.005


def test_degenerate_model():
    m = BehaviorModel(n_pevs_per_day=3, dist_t_arr=TruncNormal(15, 0.1, 14, 16), dist_t_dep=TruncNormal(10, 0.1, 9, 11))
    with pytest.raises(DegenerateModel):
        sample_scenario(m, G, 0)
    with pytest.raises(DegenerateModel):
        TruncNormal(0.0, 1.0, 30.0, 31.0).sample(np.random.default_rng(0), 5)


def test_parallel_equals_sequential(monkeypatch):
    m = BehaviorModel(n_pevs_per_day=20)
    seq = sample_scenarios(m, G, 5, 6, C, workers=1)
    monkeypatch.setenv("STATIONFORGE_THREADS", "2")
    par = sample_scenarios(m, G, 5, 6, C, workers=2)
    assert seq == par
    assert len({sc.seed for sc in seq}) == 6


def test_streams_are_disjoint():
    m = BehaviorModel(n_pevs_per_day=5)
    a = sample_scenarios(m, G, 5, 3)
    b = sample_scenarios(m, G, 5, 3, stream=1)
    assert all(x != y for x, y in zip(a, b))


def _fixed(i, t_arr, t_dep):
    return PevSession(i, t_arr, t_dep, 0.5, 0.6)


def test_unbiased_std_example():
    g = TimeGrid(0.0, 1.0, 24)
    one = Scenario(0, (_fixed(0, 8, 12),), np.zeros(24))
    two = Scenario(1, (_fixed(0, 8, 12), _fixed(1, 9, 12)), np.zeros(24))
    d = estimate_bound_distributions([one, two], C, g)
    p = d.param("pp_hi")
    assert p.mean[10] == pytest.approx(9.9, abs=1e-12)
    assert p.std[10] == pytest.approx(4.667, abs=5e-4)
    assert p.samples.shape == (2, 24)


def test_identical_scenarios_zero_spread():
    sc = sample_scenario(BehaviorModel(n_pevs_per_day=10), G, 3, C)
    d = estimate_bound_distributions([sc, sc, sc], C, G)
    for name in d.samples:
        assert np.all(d.param(name).std == 0)


def test_needs_two_scenarios():
    sc = sample_scenario(BehaviorModel(n_pevs_per_day=1), G, 3, C)
    with pytest.raises(ValueError):
        estimate_bound_distributions([sc], C, G)


def test_fitted_mean_within_clt_bound():
    rng = np.random.default_rng(11)
    n = 400
    scs = [Scenario(j, (), rng.normal(30.0, 4.0, 96)) for j in range(n)]
    d = estimate_bound_distributions(scs, C, G)
    p = d.param("p_base")
    inside = np.abs(p.mean - 30.0) <= 2 * p.std / np.sqrt(n)
    assert inside.mean() > 0.9  # about 95% of steps by construction


models = st.builds(
    BehaviorModel,
    n_pevs_per_day=st.integers(0, 15),
    dist_t_arr=st.builds(TruncNormal, st.floats(6, 12), st.floats(0, 3), st.just(4.0), st.just(14.0)),
    dist_t_dep=st.builds(TruncNormal, st.floats(15, 20), st.floats(0, 3), st.just(14.5), st.just(23.5)),
    dist_soc_arr=st.builds(TruncNormal, st.floats(0.2, 0.5), st.floats(0, 0.2), st.just(0.0), st.just(0.6)),
    dist_soc_dep=st.builds(TruncNormal, st.floats(0.7, 0.9), st.floats(0, 0.1), st.just(0.6), st.just(0.95)),
)


@settings(max_examples=40, deadline=None)
@given(models, st.integers(0, 2**31))
def test_sampled_sessions_valid(m, seed):
    sc = sample_scenario(m, G, seed, C)
    assert len(sc.sessions) == m.n_pevs_per_day
    for s in sc.sessions:
        assert 0 <= s.soc_arr <= s.soc_dep <= s.soc_max <= 1 and s.t_arr < s.t_dep
    aggregate([charging_envelope(s, C, G) for s in sc.sessions], G).check(C.eta)
