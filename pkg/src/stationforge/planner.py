"""Chance-constrained station sizing: thresholds, LP assembly, rounding, costs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .chance import DomainError, ReliabilityLevel, deterministic_lower, deterministic_upper
from .core import ChargerSpec, TimeGrid
from .lp import LinearProgram, LpSolution, Solver, solve
from .scenario import BoundDistributions

DAYS_PER_YEAR = 365
MONTHS_PER_YEAR = 12
ROW_TOL = 1e-9

# Placeholder industrial TOU schedule: (start_h, end_h, $/kWh). Not a published tariff.
DEFAULT_TOU = ((0.0, 8.0, 0.12), (8.0, 12.0, 0.18), (12.0, 18.0, 0.30), (18.0, 22.0, 0.18), (22.0, 24.0, 0.12))

# Energy a single interchange is worth when converting a per-event price into a
# per-kWh planning price (0.44 $/event <-> 0.0167 $/kWh).
ITC_EVENT_KWH = 26.4
CASE_ITC_OPER = {"0": math.inf, "1": 0.44, "2": 0.003}


class ModelError(ValueError):
    """Reformulated thresholds admit no feasible demand trajectory."""


class PlanningInfeasible(ModelError):
    def __init__(self, msg: str, families: Sequence[str] = ()):
        super().__init__(msg)
        self.families = list(families)


def capital_recovery_factor(r: float, n: int) -> float:
    """Annual payment per unit of capital: ``r(1+r)^N / ((1+r)^N - 1)``."""
    if not r > 0:
        raise DomainError(f"discount rate must be positive, got {r}")
    if int(n) != n or n < 1:
        raise DomainError(f"lifetime must be a positive integer number of years, got {n}")
    g = (1.0 + r) ** n
    return r * g / (g - 1.0)


def tou_prices(g: TimeGrid, windows=DEFAULT_TOU) -> np.ndarray:
    """Per-step price from ``(start_h, end_h, price)`` windows, keyed on step start (mod 24 h)."""
    out = np.full(g.n_steps, np.nan)
    hours = np.mod(g.starts, 24.0)
    for start, end, price in windows:
        out[(hours >= start - 1e-9) & (hours < end - 1e-9)] = price
    if np.isnan(out).any():
        raise ValueError("TOU windows do not cover every step of the grid")
    return out


@dataclass(frozen=True, eq=False)
class CostParameters:
    c_e: np.ndarray
    c_ch: float = 4000.0
    c_ed: float = 15.0
    c_loss: float = 1.2
    c_itc_plan: float = math.inf
    c_itc_oper: float = math.inf
    discount_rate: float = 0.06
    lifetime_years: int = 15
    zeta: float | None = None

    def __post_init__(self):
        c_e = np.asarray(self.c_e, dtype=float)
        c_e.setflags(write=False)
        object.__setattr__(self, "c_e", c_e)
        for name in ("c_ch", "c_ed", "c_loss", "c_itc_plan", "c_itc_oper"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if np.any(c_e < 0):
            raise ValueError("energy prices must be non-negative")
        crf = capital_recovery_factor(self.discount_rate, self.lifetime_years)
        if self.zeta is None:
            object.__setattr__(self, "zeta", crf)
        elif not math.isclose(self.zeta, crf, rel_tol=1e-9):
            raise ValueError(f"zeta={self.zeta} disagrees with CRF({self.discount_rate}, {self.lifetime_years})={crf}")

    @property
    def interchange(self) -> bool:
        return math.isfinite(self.c_itc_plan)

    def for_case(self, case: str) -> CostParameters:
        """Interchange prices of a preset case; ``custom`` keeps the current ones."""
        if case == "custom":
            return self
        if case not in CASE_ITC_OPER:
            raise ValueError(f"unknown case {case!r}")
        oper = CASE_ITC_OPER[case]
        return replace(self, c_itc_oper=oper, c_itc_plan=oper / ITC_EVENT_KWH)


def default_costs(g: TimeGrid, case: str = "0") -> CostParameters:
    return CostParameters(c_e=tou_prices(g)).for_case(case)


@dataclass(frozen=True)
class GridLimits:
    p_tran_min: float = 0.0
    p_tran_max: float = 500.0

    def __post_init__(self):
        if self.p_tran_min > self.p_tran_max:
            raise ValueError("p_tran_min must not exceed p_tran_max")


@dataclass(frozen=True, eq=False)
class DeterministicBounds:
    """Per-step thresholds after chance reformulation at ``epsilon``.

    Two quantiles are kept for quantities that appear on both sides of
    constraints: ``*_hi`` is ``F^{-1}(1-eps)`` (used as a floor),
    ``*_lo`` is ``F^{-1}(eps)`` (used as a ceiling).
    """

    grid: TimeGrid
    epsilon: float
    power_lo: np.ndarray  # floor for P + P_loss
    power_hi: np.ndarray  # ceiling for P + P_loss
    energy_lo: np.ndarray
    energy_hi: np.ndarray
    plugin_hi: np.ndarray  # floor for p_rated*X + P_pitc
    plugin_lo: np.ndarray  # ceiling for P + P_pitc and P_pitc
    pitc_energy_hi: np.ndarray  # ceiling for cumulative P_pitc energy
    pitc_energy_lo: np.ndarray  # floor for cumulative P_pitc energy
    base_hi: np.ndarray
    base_lo: np.ndarray
    form: str = "gaussian"

    @classmethod
    def deterministic(cls, grid: TimeGrid, bounds: dict[str, np.ndarray], epsilon: float = 0.2) -> DeterministicBounds:
        """Thresholds from one known realisation (no uncertainty)."""
        return cls(
            grid, epsilon,
            bounds["p_lo"], bounds["p_hi"], bounds["e_lo"], bounds["e_hi"],
            bounds["pp_hi"], bounds["pp_hi"],
            bounds["pitc_energy_cap"], np.maximum(bounds["pitc_energy_floor"], 0.0),
            bounds["p_base"], bounds["p_base"], "deterministic",
        )


def reformulate(dists: BoundDistributions, epsilon: float, form: str = "gaussian") -> DeterministicBounds:
    """Each two-sided band becomes two one-sided chance constraints at ``epsilon``.

    Gaussian thresholds are clipped to the sampled range: a floor above the
    largest observed value (or a ceiling below the smallest) is already met with
    empirical probability one. Thresholds of physically non-negative quantities
    are also clipped at zero.
    """
    ReliabilityLevel(epsilon)

    def floor(name):  # value b with b <= a'x
        v = deterministic_lower(dists.param(name, form), epsilon)
        return np.minimum(v, dists.samples[name].max(axis=0))

    def ceil(name):  # value b with a'x <= b
        v = deterministic_upper(dists.param(name, form), epsilon)
        return np.maximum(v, dists.samples[name].min(axis=0))

    nn = lambda v: np.maximum(np.asarray(v, dtype=float), 0.0)  # noqa: E731
    return DeterministicBounds(
        grid=dists.grid,
        epsilon=epsilon,
        power_lo=nn(floor("p_lo")),
        power_hi=nn(ceil("p_hi")),
        energy_lo=nn(floor("e_lo")),
        energy_hi=nn(ceil("e_hi")),
        plugin_hi=nn(floor("pp_hi")),
        plugin_lo=nn(ceil("pp_hi")),
        pitc_energy_hi=nn(ceil("pitc_energy_cap")),
        pitc_energy_lo=nn(floor("pitc_energy_floor")),
        base_hi=np.asarray(floor("p_base"), dtype=float),
        base_lo=np.asarray(ceil("p_base"), dtype=float),
        form=form,
    )


@dataclass(frozen=True)
class _Layout:
    n: int  # steps

    @property
    def X(self) -> int:
        return 0

    def P(self, t: int) -> int:
        return 1 + t

    def L(self, t: int) -> int:
        return 1 + self.n + t

    def Q(self, t: int) -> int:
        return 1 + 2 * self.n + t

    @property
    def G(self) -> int:
        return 1 + 3 * self.n

    @property
    def size(self) -> int:
        return 2 + 3 * self.n

    def names(self) -> list[str]:
        n = self.n
        return (
            ["X"] + [f"P[{t}]" for t in range(n)] + [f"P_loss[{t}]" for t in range(n)]
            + [f"P_pitc[{t}]" for t in range(n)] + ["P_max_grid"]
        )


def check_thresholds(b: DeterministicBounds, charger: ChargerSpec, limits: GridLimits) -> None:
    """Raise ModelError naming the first step where the thresholds leave no room."""
    g = b.grid
    w = charger.eta * g.dt
    for t in range(g.n_steps):
        if b.power_lo[t] > b.power_hi[t] + ROW_TOL:
            raise ModelError(f"step {t}: power floor {b.power_lo[t]:.4g} exceeds ceiling {b.power_hi[t]:.4g}")
    future_min = np.minimum.accumulate(b.energy_hi[::-1])[::-1]
    reach = np.cumsum(b.power_hi) * w
    for t in range(g.n_steps):
        if b.energy_lo[t] > future_min[t] + 1e-7 * (1 + future_min[t]):
            raise ModelError(
                f"step {t}: energy floor {b.energy_lo[t]:.4g} kWh exceeds a current or later "
                f"energy ceiling {future_min[t]:.4g} kWh"
            )
        if b.energy_lo[t] > reach[t] + 1e-7 * (1 + reach[t]):
            raise ModelError(f"step {t}: energy floor {b.energy_lo[t]:.4g} kWh unreachable under the power ceiling")
    pitc_future = np.minimum.accumulate(b.pitc_energy_hi[::-1])[::-1]
    for t in range(g.n_steps):
        if b.pitc_energy_lo[t] > pitc_future[t] + 1e-7 * (1 + pitc_future[t]):
            raise ModelError(f"step {t}: interchange energy floor exceeds its ceiling")
        hi = limits.p_tran_max - b.base_hi[t]
        lo = limits.p_tran_min - b.base_lo[t]
        if hi < -ROW_TOL:
            raise ModelError(f"step {t}: base load {b.base_hi[t]:.4g} kW alone exceeds the transformer limit")
        if lo > hi + ROW_TOL:
            raise ModelError(f"step {t}: transformer band empty after reformulation")


def build_planning_lp(
    b: DeterministicBounds,
    costs: CostParameters,
    limits: GridLimits,
    g: TimeGrid,
    charger: ChargerSpec,
) -> LinearProgram:
    """Assemble the planning LP over ``[X, P_t, P_loss_t, P_pitc_t, P_max_grid]``.

    Rows implied by others (or by zero-width variable bounds) are omitted so the
    dense solver sees only the binding structure.
    """
    if b.grid != g:
        raise ModelError("thresholds were computed on a different grid")
    if costs.c_e.shape != (g.n_steps,):
        raise ModelError(f"price vector has {costs.c_e.size} entries, grid has {g.n_steps}")
    check_thresholds(b, charger, limits)

    n = g.n_steps
    lay = _Layout(n)
    w = charger.eta * g.dt
    c = np.zeros(lay.size)
    c[lay.X] = costs.zeta * costs.c_ch
    c[lay.G] = MONTHS_PER_YEAR * costs.c_ed
    itc_price = costs.c_itc_plan if costs.interchange else 0.0
    for t in range(n):
        c[lay.P(t)] = DAYS_PER_YEAR * costs.c_e[t] * g.dt
        c[lay.L(t)] = DAYS_PER_YEAR * costs.c_loss * g.dt
        c[lay.Q(t)] = DAYS_PER_YEAR * itc_price * g.dt

    lo = np.zeros(lay.size)
    hi = np.full(lay.size, np.inf)
    rows: list[tuple[dict[int, float], str, float, str]] = []

    for t in range(n):
        # P and P_loss share the power band; both vanish where nobody can charge
        if b.power_hi[t] <= ROW_TOL or b.plugin_lo[t] <= ROW_TOL:
            hi[lay.P(t)] = 0.0
        if b.power_hi[t] <= ROW_TOL:
            hi[lay.L(t)] = 0.0
        if not costs.interchange or b.plugin_lo[t] <= ROW_TOL:
            hi[lay.Q(t)] = 0.0
        p_cap = limits.p_tran_max - b.base_hi[t]
        p_floor = limits.p_tran_min - b.base_lo[t]
        if p_cap < min(b.power_hi[t], b.plugin_lo[t]):
            hi[lay.P(t)] = min(hi[lay.P(t)], max(p_cap, 0.0))
        if p_floor > ROW_TOL:
            lo[lay.P(t)] = p_floor
            if p_floor > hi[lay.P(t)] + ROW_TOL:
                raise ModelError(f"step {t}: transformer minimum {p_floor:.4g} kW needs charging where none is possible")

    cum_power = np.cumsum(b.power_hi) * w
    cum_plugin = np.cumsum(b.plugin_lo) * w
    for t in range(n):
        pl = {lay.P(t): 1.0, lay.L(t): 1.0}
        if b.power_lo[t] > ROW_TOL:
            rows.append((pl, ">=", b.power_lo[t], f"power_lo[{t}]"))
        if b.power_hi[t] > ROW_TOL:
            rows.append((pl, "<=", b.power_hi[t], f"power_hi[{t}]"))
        cum = {}
        for s in range(t + 1):
            if hi[lay.P(s)] > 0 or lo[lay.P(s)] > 0:
                cum[lay.P(s)] = w
            if hi[lay.L(s)] > 0:
                cum[lay.L(s)] = w
        if b.energy_lo[t] > ROW_TOL:
            rows.append((cum, ">=", b.energy_lo[t], f"energy_lo[{t}]"))
        if b.energy_hi[t] < cum_power[t] - ROW_TOL:
            rows.append((cum, "<=", b.energy_hi[t], f"energy_hi[{t}]"))
        if costs.interchange:
            qcum = {lay.Q(s): w for s in range(t + 1) if hi[lay.Q(s)] > 0}
            if b.pitc_energy_lo[t] > ROW_TOL:
                rows.append((qcum, ">=", b.pitc_energy_lo[t], f"plugin_energy_lo[{t}]"))
            if qcum and b.pitc_energy_hi[t] < cum_plugin[t] - ROW_TOL:
                rows.append((qcum, "<=", b.pitc_energy_hi[t], f"plugin_energy_hi[{t}]"))
        if b.plugin_lo[t] > ROW_TOL:
            rows.append(({lay.P(t): 1.0, lay.Q(t): 1.0}, "<=", b.plugin_lo[t], f"charging_within_plugin[{t}]"))
        if b.plugin_hi[t] > ROW_TOL:
            rows.append(({lay.X: charger.p_rated, lay.Q(t): 1.0}, ">=", b.plugin_hi[t], f"charger_sizing[{t}]"))
        if hi[lay.P(t)] > 0 or lo[lay.P(t)] > 0:
            rows.append(({lay.P(t): 1.0, lay.G: -1.0}, "<=", -b.base_hi[t], f"peak[{t}]"))
    # peak also covers steps without charging
    lo[lay.G] = max(0.0, float(np.max(b.base_hi)))

    A = np.zeros((len(rows), lay.size))
    for i, (coeffs, _, _, _) in enumerate(rows):
        for j, v in coeffs.items():
            A[i, j] = v
    return LinearProgram(
        c, A, tuple(r[1] for r in rows), np.array([r[2] for r in rows]),
        lo, hi, tuple(r[3] for r in rows), tuple(lay.names()),
    )


@dataclass(eq=False)
class PlanningSolution:
    case: str
    x_chargers: int
    x_relaxed: float
    p: np.ndarray
    p_loss: np.ndarray
    p_pitc: np.ndarray
    p_max_grid: float
    capital_usd: float
    demand_charge_usd: float
    energy_usd: float
    shedding_usd: float
    itc_plan_usd: float
    relaxed_objective: float
    bounds: DeterministicBounds
    grid: TimeGrid
    lp: LinearProgram = field(repr=False)
    x: np.ndarray = field(repr=False)

    @property
    def total_annual_cost(self) -> float:
        return self.capital_usd + self.demand_charge_usd + self.energy_usd + self.shedding_usd + self.itc_plan_usd

    @property
    def p_plugin(self) -> np.ndarray:
        return self.bounds.plugin_lo - self.p_pitc

    @property
    def p_grid(self) -> np.ndarray:
        return self.p + self.bounds.base_hi

    def breakdown(self) -> dict[str, float]:
        return {
            "capital_usd": self.capital_usd,
            "demand_charge_usd": self.demand_charge_usd,
            "energy_usd": self.energy_usd,
            "shedding_usd": self.shedding_usd,
            "itc_plan_usd": self.itc_plan_usd,
            "total_usd": self.total_annual_cost,
        }


def _diagnose(sol: LpSolution) -> list[str]:
    return sorted({name.split("[")[0] for name in sol.infeasible_rows})


def solve_plan(
    b: DeterministicBounds,
    costs: CostParameters,
    limits: GridLimits,
    g: TimeGrid,
    charger: ChargerSpec,
    case: str = "custom",
    solver: Solver | None = None,
) -> PlanningSolution:
    """Relaxed solve, ceiling-round the charger count, re-solve with it fixed."""
    lp = build_planning_lp(b, costs, limits, g, charger)
    lay = _Layout(g.n_steps)
    relaxed = solve(lp, solver)
    if not relaxed.optimal:
        fam = _diagnose(relaxed)
        raise PlanningInfeasible(f"planning LP is {relaxed.status}" + (f"; binding families: {', '.join(fam)}" if fam else ""), fam)
    x_rel = float(relaxed.x[lay.X])
    x_int = max(0, math.ceil(x_rel - 1e-6))
    lo, hi = lp.lo.copy(), lp.hi.copy()
    lo[lay.X] = hi[lay.X] = x_int
    fixed_lp = LinearProgram(lp.c, lp.A, lp.senses, lp.b, lo, hi, lp.row_names, lp.col_names)
    fixed = solve(fixed_lp, solver)
    if not fixed.optimal:
        fam = _diagnose(fixed)
        raise PlanningInfeasible(f"fixed-X planning LP is {fixed.status}", fam)
    x = np.maximum(fixed.x, 0.0)
    x[lay.X] = x_int
    n = g.n_steps
    P = x[1 : 1 + n]
    L = x[1 + n : 1 + 2 * n]
    Q = x[1 + 2 * n : 1 + 3 * n]
    itc_price = costs.c_itc_plan if costs.interchange else 0.0
    return PlanningSolution(
        case=case,
        x_chargers=x_int,
        x_relaxed=x_rel,
        p=P,
        p_loss=L,
        p_pitc=Q,
        p_max_grid=float(x[lay.G]),
        capital_usd=x_int * costs.zeta * costs.c_ch,
        demand_charge_usd=MONTHS_PER_YEAR * costs.c_ed * float(x[lay.G]),
        energy_usd=DAYS_PER_YEAR * float(costs.c_e @ P) * g.dt,
        shedding_usd=DAYS_PER_YEAR * costs.c_loss * float(L.sum()) * g.dt,
        itc_plan_usd=DAYS_PER_YEAR * itc_price * float(Q.sum()) * g.dt,
        relaxed_objective=relaxed.objective,
        bounds=b,
        grid=g,
        lp=fixed_lp,
        x=x,
    )


def plan_case(
    dists: BoundDistributions,
    costs: CostParameters,
    limits: GridLimits,
    charger: ChargerSpec,
    case: str,
    epsilon: float = 0.2,
    form: str = "gaussian",
    solver: Solver | None = None,
) -> PlanningSolution:
    b = reformulate(dists, epsilon, form)
    return solve_plan(b, costs.for_case(case), limits, dists.grid, charger, case, solver)


def satisfaction_rates(
    plan: PlanningSolution,
    fresh: Sequence[dict[str, np.ndarray]],
    trained: BoundDistributions,
    charger: ChargerSpec,
    tol: float = 1e-6,
) -> dict[str, tuple[float, float, int]]:
    """Empirical satisfaction of each chance-constrained family on fresh bound draws.

    ``fresh`` holds per-scenario bounds (see ``scenario_bounds``). Only steps
    where the training samples vary are scored; elsewhere the row is
    deterministic. Returns ``family -> (mean rate, worst step rate, n steps)``.
    """
    g = plan.grid
    w = charger.eta * g.dt
    served = plan.p + plan.p_loss
    cum_served = np.cumsum(served) * w
    cum_q = np.cumsum(plan.p_pitc) * w
    checks = {
        "power_lo": ("p_lo", lambda b: served >= b - tol),
        "power_hi": ("p_hi", lambda b: served <= b + tol),
        "energy_lo": ("e_lo", lambda b: cum_served >= b - tol),
        "energy_hi": ("e_hi", lambda b: cum_served <= b + tol),
        "charging_within_plugin": ("pp_hi", lambda b: plan.p + plan.p_pitc <= b + tol),
        "charger_sizing": ("pp_hi", lambda b: charger.p_rated * plan.x_chargers + plan.p_pitc >= b - tol),
        "peak": ("p_base", lambda b: plan.p + b <= plan.p_max_grid + tol),
    }
    if np.any(plan.p_pitc > tol):
        checks["plugin_energy_hi"] = ("pitc_energy_cap", lambda b: cum_q <= b + tol)
        checks["plugin_energy_lo"] = ("pitc_energy_floor", lambda b: cum_q >= b - tol)
    out = {}
    for family, (name, holds) in checks.items():
        varying = trained.samples[name].std(axis=0) > 1e-9
        if not varying.any():
            continue
        ok = np.array([holds(fb[name]) for fb in fresh])[:, varying]
        per_step = ok.mean(axis=0)
        out[family] = (float(per_step.mean()), float(per_step.min()), int(varying.sum()))
    return out
