from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from stationforge.core import ChargerSpec, PevSession, TimeGrid, energy_need, session_window
from stationforge.opsim import OperationPolicy, clairvoyant_cost, dispatch, simulate_day
from stationforge.planner import CostParameters, GridLimits, default_costs, plan_case
from stationforge.scenario import BehaviorModel, Scenario, estimate_bound_distributions, sample_scenario, sample_scenarios

G = TimeGrid()
C = ChargerSpec()
HOURLY = TimeGrid(0.0, 1.0, 24)
UNIT = ChargerSpec(6.6, 1.0)


def flat_costs(g, itc=0.0):
    return CostParameters(c_e=np.full(g.n_steps, 0.2), c_itc_plan=itc / 26.4, c_itc_oper=itc)


def shared_charger_scenario():
    # A needs two rated hours and leaves at 6; B arrives at 1 and needs two rated hours
    a = PevSession(0, 0.0, 6.0, 0.0, 0.55, battery_kwh=24.0)
    b = PevSession(1, 1.0, 10.0, 0.0, 0.55, battery_kwh=24.0)
    return Scenario(0, (a, b), np.zeros(24))


def plug_step(log, pev):
    return min(t for t, p, _, _, ev in log.rows() if p == pev and ev in ("plug", "interchange_in"))


def test_shared_charger_with_interchange():
    log, k = simulate_day(shared_charger_scenario(), 1, UNIT, HOURLY, flat_costs(HOURLY))
    assert k.interchanges == 1
    ev = log.interchanges[0]
    assert (ev.from_pev, ev.to_pev, ev.charger) == (0, 1, 0)
    # A finishes at the end of hour 2; B is plugged then
    assert plug_step(log, 1) == 2
    assert k.unmet_kwh == 0


def test_shared_charger_without_interchange():
    costs = replace(flat_costs(HOURLY), c_itc_plan=np.inf, c_itc_oper=np.inf)
    log, k = simulate_day(shared_charger_scenario(), 1, UNIT, HOURLY, costs)
    assert k.interchanges == 0
    assert plug_step(log, 1) == 6
    assert k.unmet_kwh == 0  # B still has 4 hours


def test_interchange_delay_idles_charger():
    a = PevSession(0, 0.0, 6.0, 0.0, 0.55, battery_kwh=24.0, dt_itc=1.5)
    b = PevSession(1, 1.0, 10.0, 0.0, 0.55, battery_kwh=24.0)
    log, k = simulate_day(Scenario(0, (a, b), np.zeros(24)), 1, UNIT, HOURLY, flat_costs(HOURLY))
    assert k.interchanges == 1
    assert plug_step(log, 1) == 2 + 2  # ceil(1.5 h / 1 h) idle steps
    assert all(len(r.plugged) == 0 for r in log.records[2:4])


def test_no_interchange_when_delay_reaches_departure():
    a = PevSession(0, 0.0, 3.0, 0.0, 0.55, battery_kwh=24.0, dt_itc=1.0)
    b = PevSession(1, 1.0, 10.0, 0.0, 0.55, battery_kwh=24.0)
    log, k = simulate_day(Scenario(0, (a, b), np.zeros(24)), 1, UNIT, HOURLY, flat_costs(HOURLY))
    assert k.interchanges == 0 and plug_step(log, 1) == 3


def test_no_arrivals():
    log, k = simulate_day(Scenario(0, (), np.zeros(96)), 3, C, G, default_costs(G, "2"))
    assert all(r.grid_kw == 0 and not r.plugged and not r.events for r in log.records)
    assert k.interchanges == 0 and k.unmet_kwh == 0 and k.operating_cost_day == 0
    assert k.energy_usd == k.shedding_usd == k.itc_event_usd == k.demand_charge_usd == 0


def peak_presence(sc, g):
    count = np.zeros(g.n_steps, dtype=int)
    for s in sc.sessions:
        w = session_window(s, g)
        count[w.a:w.d] += 1
    return int(count.max())


@pytest.mark.parametrize("seed", range(5))
def test_capacity_sufficiency(seed):
    sc = sample_scenario(BehaviorModel(n_pevs_per_day=30), G, seed, C)
    x = peak_presence(sc, G)
    log, k = simulate_day(sc, x, C, G, default_costs(G, "0"))
    assert k.mean_wait_h == 0 and k.unmet_kwh == 0
    assert max(len(r.plugged) for r in log.records) == x


def _utilization_curve(seed, xs):
    sc = sample_scenario(BehaviorModel(n_pevs_per_day=30), G, seed, C)
    return [simulate_day(sc, x, C, G, default_costs(G, "0"))[1].utilization for x in xs]


@pytest.mark.xfail(reason="an extra charger can serve a vehicle that charges for more steps than "
                          "the fleet average, so single-step monotonicity does not hold", strict=False)
def test_utilization_non_increasing_per_charger():
    for seed in range(5):
        utils = _utilization_curve(seed, range(4, 32))
        assert all(a >= b - 1e-12 for a, b in zip(utils, utils[1:]))


def test_utilization_falls_with_fleet_size():
    xs = list(range(4, 32))
    for seed in range(10):
        utils = _utilization_curve(seed, xs)
        assert spearmanr(xs, utils)[0] < -0.8
        assert utils[0] > utils[-1]


@pytest.mark.parametrize("case,x", [("0", 12), ("1", 12), ("2", 8)])
def test_conservation(case, x):
    sc = sample_scenario(BehaviorModel(), G, 17, C)
    log, k = simulate_day(sc, x, C, G, default_costs(G, case))
    sessions = {s.id: s for s in sc.sessions}
    energy = Counter()
    for r in log.records:
        assert len(r.plugged) <= x
        assert r.grid_kw == pytest.approx(r.pev_kw + r.base_kw)
        assert r.pev_kw <= C.p_rated * len(r.plugged) + 1e-9
        for pev, p in r.power.items():
            energy[pev] += p * C.eta * G.dt
    for pev, e in energy.items():
        s = sessions[pev]
        assert e == pytest.approx(log.delivered_kwh[pev], abs=1e-9)
        assert e <= (s.soc_max - s.soc_arr) * s.battery_kwh + 1e-9
        assert log.unmet_kwh[pev] == pytest.approx(max(0.0, energy_need(s) - e), abs=1e-6)
    # every interchange has a matching release and claim, and happens before the releasing PEV leaves
    rows = log.rows()
    outs = Counter((t, p, c) for t, p, c, _, ev in rows if ev == "interchange_out")
    ins = Counter((t, p, c) for t, p, c, _, ev in rows if ev == "interchange_in")
    for e in log.interchanges:
        assert outs[(e.t_index, e.from_pev, e.charger)] == 1
        assert ins[(e.plug_in_index, e.to_pev, e.charger)] == 1
        assert e.plug_in_index < e.from_departure_index
    assert len(log.interchanges) == k.interchanges
    assert 0 <= k.utilization <= k.occupancy <= 1


def test_every_vehicle_departs_once():
    sc = sample_scenario(BehaviorModel(), G, 3, C)
    log, _ = simulate_day(sc, 10, C, G, default_costs(G, "2"))
    rows = log.rows()
    assert Counter(p for _, p, _, _, ev in rows if ev == "depart") == Counter(s.id for s in sc.sessions)
    assert Counter(p for _, p, _, _, ev in rows if ev == "arrive") == Counter(s.id for s in sc.sessions)
    shed = {p: v * G.dt for _, p, _, v, ev in rows if ev == "shed"}
    assert shed == pytest.approx({p: u for p, u in log.unmet_kwh.items() if u > 0})


def test_midday_concurrency_case0_sizing():
    m = BehaviorModel(n_pevs_per_day=26)
    dists = estimate_bound_distributions(sample_scenarios(m, G, 1, 100, C), C, G)
    plan = plan_case(dists, default_costs(G), GridLimits(), C, "0")
    for seed in range(10):
        log, _ = simulate_day(sample_scenario(m, G, 1000 + seed, C), plan, C, G, default_costs(G, "0"))
        assert max(len(r.plugged) for r in log.records) <= plan.x_chargers


def test_dispatch_respects_transformer():
    prices = np.full(8, 0.1)
    fleet = [(i, 6.0, 10.0, 8) for i in range(4)]
    plans = dispatch(fleet, 0, prices, np.zeros(8), 10.0, C, 1.0, 1.2)
    total = sum(plans.values())
    assert np.all(total <= 10.0 + 1e-7)
    for p in plans.values():
        assert p.sum() * C.eta == pytest.approx(6.0, abs=1e-6)
        assert np.all(p <= C.p_rated + 1e-9)


def test_dispatch_prefers_cheap_steps():
    prices = np.array([0.3, 0.3, 0.1, 0.1, 0.3, 0.3])
    plans = dispatch([(0, C.step_energy(1.0) * 2, 50.0, 6)], 0, prices, np.zeros(6), 500.0, C, 1.0, 1.2)
    assert np.allclose(plans[0], [0, 0, 6.6, 6.6, 0, 0])


def test_dispatch_sheds_when_price_exceeds_penalty():
    plans = dispatch([(0, 5.0, 50.0, 4)], 0, np.full(4, 5.0), np.zeros(4), 500.0, C, 1.0, 1.2)
    assert np.all(plans[0] == 0)


@pytest.mark.parametrize("seed", range(6))
def test_rolling_cost_above_clairvoyant(seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid(0.0, 1.0, 12)
    sessions = []
    for i in range(int(rng.integers(1, 7))):
        a = float(rng.integers(0, 8))
        d = float(rng.integers(a + 1, 13))
        soc = float(rng.uniform(0.1, 0.6))
        sessions.append(PevSession(i, a, d, soc, min(0.95, soc + rng.uniform(0, 0.4))))
    sc = Scenario(seed, tuple(sessions), rng.uniform(0, 5, 12))
    costs = CostParameters(c_e=rng.uniform(0.1, 0.3, 12), c_itc_plan=0.01, c_itc_oper=0.1)
    limits = GridLimits(0.0, 12.0)
    _, k = simulate_day(sc, 2, C, g, costs, limits=limits)
    assert k.operating_cost_day >= clairvoyant_cost(sc, 2, C, g, costs, limits) - 1e-7


def test_grid_mismatch_rejected(tmp_path):
    sc = Scenario(0, (), np.zeros(48))
    with pytest.raises(ValueError):
        simulate_day(sc, 1, C, G, default_costs(G))


def test_policy_override_disables_interchange():
    sc = sample_scenario(BehaviorModel(), G, 5, C)
    _, k = simulate_day(sc, 8, C, G, default_costs(G, "2"), OperationPolicy(interchange=False))
    assert k.interchanges == 0
