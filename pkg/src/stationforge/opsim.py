"""Rolling-horizon station operation with charger interchange.

Within step ``k`` (starting at ``t0 + k*dt``) the station:

1. releases vehicles whose departure step is ``k`` (unmet energy is shed);
2. queues new arrivals, FIFO by arrival time then id;
3. completes interchanges whose idle delay has elapsed;
4. plugs queue heads into free chargers;
5. if interchange is enabled and vehicles still wait, unplugs finished vehicles
   (earliest finisher first) for the queue head; the charger then idles for the
   outgoing vehicle's interchange delay;
6. dispatches the plugged vehicles with a certainty-equivalent LP from ``k``
   to their departures and applies the first step.

Only vehicles that have arrived are visible to the dispatcher.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import ChargerSpec, PevSession, TimeGrid, energy_need, session_window
from .lp import HighsSolver, LinearProgram, Solver, SimplexSolver
from .planner import DAYS_PER_YEAR, MONTHS_PER_YEAR, CostParameters, GridLimits, PlanningSolution
from .scenario import Scenario

E_TOL = 1e-9
SMALL_LP_VARS = 400

EVENTS = ("arrive", "plug", "interchange_out", "interchange_in", "depart", "shed")


@dataclass(frozen=True)
class OperationPolicy:
    interchange: bool = True
    # $/kWh per hour of delay, added to prices only while vehicles wait in the queue
    queue_urgency: float = 0.02
    tie_break: float = 1e-6  # $/kWh per step; prefers earlier charging among equal prices


@dataclass(frozen=True)
class _Vehicle:
    session: PevSession
    a: int
    d: int
    need: float  # battery-side kWh
    cap: float  # battery headroom to soc_max

    @property
    def id(self) -> int:
        return self.session.id


@dataclass(frozen=True)
class InterchangeEvent:
    t_index: int
    from_pev: int
    to_pev: int
    charger: int
    plug_in_index: int  # when the incoming vehicle is plugged
    from_departure_index: int


@dataclass
class StationState:
    k: int
    n_chargers: int
    vehicles: dict[int, _Vehicle] = field(default_factory=dict)
    plugged: dict[int, int] = field(default_factory=dict)  # charger -> pev
    queue: list[int] = field(default_factory=list)
    delivered: dict[int, float] = field(default_factory=dict)
    finished_at: dict[int, int] = field(default_factory=dict)
    swaps: dict[int, tuple[int, int]] = field(default_factory=dict)  # charger -> (pev, plug step)
    plug_index: dict[int, int] = field(default_factory=dict)  # first plug step per pev
    gone: set[int] = field(default_factory=set)

    def copy(self) -> StationState:
        return replace(
            self,
            vehicles=dict(self.vehicles),
            plugged=dict(self.plugged),
            queue=list(self.queue),
            delivered=dict(self.delivered),
            finished_at=dict(self.finished_at),
            swaps=dict(self.swaps),
            plug_index=dict(self.plug_index),
            gone=set(self.gone),
        )

    def check(self) -> None:
        plugged = set(self.plugged.values())
        assert len(self.plugged) <= self.n_chargers
        assert not plugged & set(self.queue), "a vehicle is both plugged and queued"
        for cid in self.plugged:
            assert 0 <= cid < self.n_chargers
        for i, e in self.delivered.items():
            assert e <= self.vehicles[i].cap + 1e-6


@dataclass
class StepRecord:
    t_index: int
    plugged: dict[int, int]
    power: dict[int, float]  # pev -> kW (grid side)
    base_kw: float
    queue_len: int
    present: int
    events: list[tuple[int, int, float, str]]  # (pev, charger, p_kw, event)

    @property
    def pev_kw(self) -> float:
        return float(sum(self.power.values()))

    @property
    def grid_kw(self) -> float:
        return self.pev_kw + self.base_kw

    @property
    def charging(self) -> int:
        return sum(1 for p in self.power.values() if p > E_TOL)


@dataclass
class OperationLog:
    grid: TimeGrid
    n_chargers: int
    records: list[StepRecord]
    interchanges: list[InterchangeEvent]
    unmet_kwh: dict[int, float]
    delivered_kwh: dict[int, float]
    wait_h: dict[int, float]
    close_events: list[tuple[int, int, float, str]] = field(default_factory=list)

    @property
    def peak_kw(self) -> float:
        """Recorded peak of the day, used as the monthly peak proxy."""
        return max((r.grid_kw for r in self.records), default=0.0)

    def rows(self) -> list[tuple[int, int, int, float, str]]:
        """``(t_index, pev_id, charger_id, p_kw, event)``; charger -1 when unplugged."""
        out = []
        for r in self.records:
            for pev, cid, p, ev in r.events:
                out.append((r.t_index, pev, cid, p, ev))
            for cid in sorted(r.plugged):
                pev = r.plugged[cid]
                out.append((r.t_index, pev, cid, r.power.get(pev, 0.0), ""))
        for pev, cid, p, ev in self.close_events:
            out.append((self.grid.n_steps, pev, cid, p, ev))
        return out


@dataclass
class KpiReport:
    x_chargers: int
    n_pevs: int
    utilization: float
    occupancy: float
    interchanges: int
    unmet_kwh: float
    mean_wait_h: float
    peak_kw: float
    energy_usd: float
    demand_charge_usd: float
    shedding_usd: float
    itc_event_usd: float
    capital_usd: float
    operating_cost_day: float  # energy + shedding + interchange, one day

    @property
    def total_usd(self) -> float:
        return self.energy_usd + self.demand_charge_usd + self.shedding_usd + self.itc_event_usd + self.capital_usd


# --------------------------------------------------------------------------
# dispatch


def _effective_prices(k: int, horizon: int, prices: np.ndarray, dt: float, policy: OperationPolicy, urgent: bool) -> np.ndarray:
    steps = np.arange(horizon)
    eff = prices[k : k + horizon] + policy.tie_break * steps
    if urgent:
        eff = eff + policy.queue_urgency * steps * dt
    return eff


def dispatch(
    vehicles: Sequence[tuple[int, float, float, int]],
    k: int,
    prices: np.ndarray,
    base: np.ndarray,
    p_tran_max: float,
    charger: ChargerSpec,
    dt: float,
    c_loss: float,
    policy: OperationPolicy = OperationPolicy(),
    urgent: bool = False,
    solver: Solver | None = None,
) -> dict[int, np.ndarray]:
    """Cheapest schedules for plugged vehicles ``(id, need_kwh, cap_kwh, departure_step)``.

    Returns per-vehicle power over steps ``k .. departure-1``. Vehicles decouple
    unless the transformer binds, so each is filled greedily by effective
    price; only if the summed plan breaks the transformer limit is the joint LP
    solved.
    """
    if not vehicles:
        return {}
    horizon = max(d for *_, d in vehicles) - k
    eff = _effective_prices(k, horizon, prices, dt, policy, urgent)
    e_step = charger.step_energy(dt)
    plans: dict[int, np.ndarray] = {}
    for vid, need, cap, d in vehicles:
        h = d - k
        p = np.zeros(h)
        remaining = min(need, cap)
        for s in sorted(range(h), key=lambda s: (eff[s], s)):
            if remaining <= E_TOL or eff[s] >= c_loss * charger.eta:
                break
            e = min(e_step, remaining)
            p[s] = e / (charger.eta * dt)
            remaining -= e
        plans[vid] = p
    total = np.zeros(horizon)
    for p in plans.values():
        total[: p.size] += p
    room = np.maximum(p_tran_max - base[k : k + horizon], 0.0)
    if np.all(total <= room + 1e-7):
        return plans
    return _dispatch_lp(vehicles, k, horizon, eff, room, charger, dt, c_loss, solver)


def _dispatch_lp(vehicles, k, horizon, eff, room, charger, dt, c_loss, solver):
    cols: list[tuple[int, int]] = []
    for i, (_, _, _, d) in enumerate(vehicles):
        cols += [(i, s) for s in range(d - k)]
    nv = len(vehicles)
    n = len(cols) + nv
    c = np.zeros(n)
    hi = np.full(n, np.inf)
    w = charger.eta * dt
    rows, senses, rhs = [], [], []
    energy_rows = [np.zeros(n) for _ in range(nv)]
    step_rows = [np.zeros(n) for _ in range(horizon)]
    for j, (i, s) in enumerate(cols):
        c[j] = eff[s] * dt
        hi[j] = charger.p_rated
        energy_rows[i][j] = w
        step_rows[s][j] = 1.0
    for i, (_, need, cap, _) in enumerate(vehicles):
        u = len(cols) + i
        c[u] = c_loss
        if need > E_TOL:
            row = energy_rows[i].copy()
            row[u] = 1.0
            rows.append(row)
            senses.append(">=")
            rhs.append(need)
        rows.append(energy_rows[i])
        senses.append("<=")
        rhs.append(cap)
    for s in range(horizon):
        if np.any(step_rows[s]):
            rows.append(step_rows[s])
            senses.append("<=")
            rhs.append(room[s])
    lp = LinearProgram(c, np.array(rows), tuple(senses), np.array(rhs), None, hi)
    if solver is None:
        solver = SimplexSolver() if n <= SMALL_LP_VARS else HighsSolver()
    sol = solver(lp)
    if not sol.optimal:
        raise RuntimeError(f"dispatch LP {sol.status}")  # always feasible: p = 0, u = need
    plans = {vid: np.zeros(d - k) for vid, _, _, d in vehicles}
    for j, (i, s) in enumerate(cols):
        plans[vehicles[i][0]][s] = max(0.0, sol.x[j])
    return plans


# --------------------------------------------------------------------------
# simulation


@dataclass(frozen=True, eq=False)
class _Context:
    grid: TimeGrid
    charger: ChargerSpec
    prices: np.ndarray
    base: np.ndarray
    limits: GridLimits
    c_loss: float
    policy: OperationPolicy
    solver: Solver | None = None


def _vehicle(s: PevSession, g: TimeGrid) -> _Vehicle:
    w = session_window(s, g)
    return _Vehicle(s, w.a, w.d, energy_need(s), (s.soc_max - s.soc_arr) * s.battery_kwh)


def step(state: StationState, arrivals: Sequence[PevSession], ctx: _Context) -> tuple[StationState, StepRecord, list[InterchangeEvent]]:
    st = state.copy()
    k = st.k
    g = ctx.grid
    events: list[tuple[int, int, float, str]] = []
    swaps_logged: list[InterchangeEvent] = []

    _departures(st, k, events, g.dt)

    for s in sorted(arrivals, key=lambda s: (s.t_arr, s.id)):
        v = _vehicle(s, g)
        st.vehicles[v.id] = v
        st.delivered[v.id] = 0.0
        events.append((v.id, -1, 0.0, "arrive"))
        if v.d <= k:
            st.gone.add(v.id)
            events.append((v.id, -1, 0.0, "depart"))
            if v.need > E_TOL:
                events.append((v.id, -1, v.need / g.dt, "shed"))
            continue
        st.queue.append(v.id)
        if v.need <= E_TOL:
            st.finished_at[v.id] = k

    for cid in sorted(st.swaps):
        pev, at = st.swaps[cid]
        if at == k:
            del st.swaps[cid]
            _plug(st, cid, pev, k)
            events.append((pev, cid, 0.0, "interchange_in"))

    busy = set(st.plugged) | set(st.swaps)
    for cid in range(st.n_chargers):
        if not st.queue:
            break
        if cid not in busy:
            pev = st.queue.pop(0)
            _plug(st, cid, pev, k)
            events.append((pev, cid, 0.0, "plug"))

    if ctx.policy.interchange and st.queue:
        finished = sorted(
            (cid for cid, pev in st.plugged.items() if pev in st.finished_at),
            key=lambda cid: (st.finished_at[st.plugged[cid]], st.plugged[cid]),
        )
        for cid in finished:
            if not st.queue:
                break
            a_id = st.plugged[cid]
            va = st.vehicles[a_id]
            delay = math.ceil(va.session.dt_itc / g.dt - 1e-9)
            b_id = st.queue[0]
            vb = st.vehicles[b_id]
            if not (k + delay < va.d and k + delay < vb.d):
                continue
            st.queue.pop(0)
            del st.plugged[cid]
            events.append((a_id, cid, 0.0, "interchange_out"))
            swaps_logged.append(InterchangeEvent(k, a_id, b_id, cid, k + delay, va.d))
            if delay == 0:
                _plug(st, cid, b_id, k)
                events.append((b_id, cid, 0.0, "interchange_in"))
            else:
                st.swaps[cid] = (b_id, k + delay)

    urgent = ctx.policy.interchange and bool(st.queue)
    fleet = []
    for cid in sorted(st.plugged):
        pev = st.plugged[cid]
        v = st.vehicles[pev]
        fleet.append((pev, max(0.0, v.need - st.delivered[pev]), max(0.0, v.cap - st.delivered[pev]), v.d))
    plans = dispatch(
        fleet, k, ctx.prices, ctx.base, ctx.limits.p_tran_max, ctx.charger, g.dt, ctx.c_loss,
        ctx.policy, urgent, ctx.solver,
    )
    power = {}
    for pev, plan in plans.items():
        p = float(min(plan[0], ctx.charger.p_rated)) if plan.size else 0.0
        power[pev] = p
        st.delivered[pev] = min(st.delivered[pev] + p * ctx.charger.eta * g.dt, st.vehicles[pev].cap)
        if pev not in st.finished_at and st.delivered[pev] >= st.vehicles[pev].need - E_TOL:
            st.finished_at[pev] = k + 1

    present = sum(1 for v in st.vehicles.values() if v.id not in st.gone)
    rec = StepRecord(k, dict(st.plugged), power, float(ctx.base[k]), len(st.queue), present, events)
    st.k = k + 1
    return st, rec, swaps_logged


def _plug(st: StationState, cid: int, pev: int, k: int) -> None:
    st.plugged[cid] = pev
    st.plug_index.setdefault(pev, k)


def _departures(st: StationState, k: int, events: list, dt: float) -> None:
    leaving = sorted(v.id for v in st.vehicles.values() if v.d <= k and v.id not in st.gone)
    for pev in leaving:
        v = st.vehicles[pev]
        cid = next((c for c, p in st.plugged.items() if p == pev), -1)
        if cid >= 0:
            del st.plugged[cid]
        if pev in st.queue:
            st.queue.remove(pev)
        for c, (incoming, _) in list(st.swaps.items()):
            if incoming == pev:
                del st.swaps[c]
        st.gone.add(pev)
        events.append((pev, cid, 0.0, "depart"))
        short = v.need - st.delivered[pev]
        if short > 1e-7:
            events.append((pev, cid, short / dt, "shed"))


def simulate_day(
    scenario: Scenario,
    plan: PlanningSolution | int,
    charger: ChargerSpec,
    grid: TimeGrid,
    costs: CostParameters,
    policy: OperationPolicy | None = None,
    limits: GridLimits = GridLimits(),
    solver: Solver | None = None,
) -> tuple[OperationLog, KpiReport]:
    x = plan.x_chargers if isinstance(plan, PlanningSolution) else int(plan)
    if isinstance(plan, PlanningSolution) and plan.grid != grid:
        raise ValueError("plan and simulation use different grids")
    if policy is None:
        policy = OperationPolicy(interchange=costs.interchange)
    if scenario.base_load.shape != (grid.n_steps,) or costs.c_e.shape != (grid.n_steps,):
        raise ValueError("scenario/prices do not match the grid")
    ctx = _Context(grid, charger, costs.c_e, scenario.base_load, limits, costs.c_loss, policy, solver)

    by_step: dict[int, list[PevSession]] = {}
    for s in scenario.sessions:
        a = min(max(grid.snap_arrival(s.t_arr), 0), grid.n_steps)
        by_step.setdefault(a, []).append(s)

    st = StationState(0, x)
    records, swaps = [], []
    for k in range(grid.n_steps):
        st, rec, ev = step(st, by_step.get(k, []), ctx)
        st.check()
        records.append(rec)
        swaps += ev
    close: list = []
    late = by_step.get(grid.n_steps, [])
    for s in late:  # arrivals clipped to the end of the grid never get a step
        v = _vehicle(s, grid)
        st.vehicles[v.id] = v
        st.delivered[v.id] = 0.0
        close.append((v.id, -1, 0.0, "arrive"))
    _departures(st, grid.n_steps, close, grid.dt)

    unmet = {i: max(0.0, v.need - st.delivered[i]) for i, v in st.vehicles.items()}
    unmet = {i: (u if u > 1e-7 else 0.0) for i, u in unmet.items()}
    wait = {
        i: (st.plug_index.get(i, v.d) - v.a) * grid.dt if v.d > v.a else 0.0
        for i, v in st.vehicles.items()
    }
    log = OperationLog(grid, x, records, swaps, unmet, dict(st.delivered), wait, close)
    return log, kpis(log, costs, charger)


def kpis(log: OperationLog, costs: CostParameters, charger: ChargerSpec) -> KpiReport:
    g = log.grid
    x = log.n_chargers
    slots = x * g.n_steps
    charging = sum(r.charging for r in log.records)
    plugged = sum(len(r.plugged) for r in log.records)
    n_itc = len(log.interchanges)
    energy_day = float(sum(costs.c_e[r.t_index] * r.pev_kw for r in log.records) * g.dt)
    unmet = float(sum(log.unmet_kwh.values()))
    itc_day = n_itc * costs.c_itc_oper if n_itc else 0.0
    return KpiReport(
        x_chargers=x,
        n_pevs=len(log.delivered_kwh),
        utilization=charging / slots if slots else 0.0,
        occupancy=plugged / slots if slots else 0.0,
        interchanges=n_itc,
        unmet_kwh=unmet,
        mean_wait_h=float(np.mean(list(log.wait_h.values()))) if log.wait_h else 0.0,
        peak_kw=log.peak_kw,
        energy_usd=DAYS_PER_YEAR * energy_day,
        demand_charge_usd=MONTHS_PER_YEAR * costs.c_ed * log.peak_kw,
        shedding_usd=DAYS_PER_YEAR * costs.c_loss * unmet,
        itc_event_usd=DAYS_PER_YEAR * itc_day,
        capital_usd=x * costs.zeta * costs.c_ch,
        operating_cost_day=energy_day + costs.c_loss * unmet + itc_day,
    )


def clairvoyant_cost(
    scenario: Scenario,
    x_chargers: int,
    charger: ChargerSpec,
    grid: TimeGrid,
    costs: CostParameters,
    limits: GridLimits = GridLimits(),
    solver: Solver | None = None,
) -> float:
    """Daily energy + shedding cost with every session known in advance.

    Charger assignment is relaxed to a fleet power cap ``p_rated * X``, so this
    lower-bounds the operating cost of any non-anticipative policy.
    """
    vs = [_vehicle(s, grid) for s in scenario.sessions]
    cols = [(i, t) for i, v in enumerate(vs) for t in range(v.a, v.d)]
    n = len(cols) + len(vs)
    if n == 0:
        return 0.0
    w = charger.eta * grid.dt
    c = np.zeros(n)
    hi = np.full(n, np.inf)
    A_e = np.zeros((len(vs), n))
    A_t = np.zeros((grid.n_steps, n))
    for j, (i, t) in enumerate(cols):
        c[j] = costs.c_e[t] * grid.dt
        hi[j] = charger.p_rated
        A_e[i, j] = w
        A_t[t, j] = 1.0
    rows, senses, rhs = [], [], []
    for i, v in enumerate(vs):
        u = len(cols) + i
        c[u] = costs.c_loss
        r = A_e[i].copy()
        r[u] = 1.0
        rows += [r, A_e[i]]
        senses += [">=", "<="]
        rhs += [v.need, v.cap]
    for t in range(grid.n_steps):
        if A_t[t].any():
            rows += [A_t[t], A_t[t]]
            senses += ["<=", "<="]
            rhs += [charger.p_rated * x_chargers, max(0.0, limits.p_tran_max - scenario.base_load[t])]
    lp = LinearProgram(c, np.array(rows), tuple(senses), np.array(rhs), None, hi)
    sol = (solver or (SimplexSolver() if n <= SMALL_LP_VARS else HighsSolver()))(lp)
    if not sol.optimal:
        raise RuntimeError(f"clairvoyant LP {sol.status}")
    return sol.objective
