"""Monte-Carlo session populations and per-step bound statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chance import StochasticParam
from .core import (
    ChargerSpec,
    PevSession,
    TimeGrid,
    aggregate,
    charging_envelope,
    plugin_energy_need,
    plugin_max_energy,
    plugin_envelope,
    session_window,
)

MAX_TRIES = 1000


class DegenerateModel(ValueError):
    """Rejection sampling could not produce a valid value within the try cap."""


@dataclass(frozen=True)
class TruncNormal:
    mean: float
    std: float
    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)) or self.lower > self.upper:
            raise ValueError(f"truncation bounds must be finite and ordered: {self}")
        if self.std < 0:
            raise ValueError("std must be non-negative")
        if self.std == 0 and not self.lower <= self.mean <= self.upper:
            raise ValueError("a fixed value must lie inside its bounds")

    def theoretical_mean(self) -> float:
        if self.std == 0:
            return self.mean
        a = (self.lower - self.mean) / self.std
        b = (self.upper - self.mean) / self.std
        phi = lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi)  # noqa: E731
        Z = 0.5 * (math.erf(b / math.sqrt(2)) - math.erf(a / math.sqrt(2)))
        return self.mean + self.std * (phi(a) - phi(b)) / Z

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.std == 0:
            return np.full(size, float(self.mean))
        out = np.empty(size)
        todo = np.arange(size)
        for _ in range(MAX_TRIES):
            if todo.size == 0:
                return out
            x = rng.normal(self.mean, self.std, todo.size)
            ok = (x >= self.lower) & (x <= self.upper)
            out[todo[ok]] = x[ok]
            todo = todo[~ok]
        if todo.size:
            raise DegenerateModel(f"{self}: truncation region too improbable")
        return out


@dataclass(frozen=True)
class BehaviorModel:
    """Driver behaviour for one day. Defaults are placeholders, not survey fits."""

    n_pevs_per_day: int = 50
    dist_t_arr: TruncNormal = TruncNormal(9.0, 1.5, 5.0, 13.0)
    dist_t_dep: TruncNormal = TruncNormal(17.5, 1.5, 13.0, 23.0)
    dist_soc_arr: TruncNormal = TruncNormal(0.45, 0.15, 0.05, 0.8)
    dist_soc_dep: TruncNormal = TruncNormal(0.85, 0.05, 0.7, 0.95)
    soc_max: float = 0.95
    dt_itc: float = 0.25
    battery_kwh: float = 24.0
    consumption_kwh_per_km: float = 0.14
    base_load_kw: float | tuple[float, ...] = 0.0
    base_load_noise_kw: float = 0.0

    def __post_init__(self):
        if self.n_pevs_per_day < 0:
            raise ValueError("n_pevs_per_day must be >= 0")
        if not 0 < self.soc_max <= 1:
            raise ValueError("soc_max must lie in (0, 1]")
        if self.base_load_noise_kw < 0:
            raise ValueError("base_load_noise_kw must be >= 0")

    def base_profile(self, g: TimeGrid) -> np.ndarray:
        if np.ndim(self.base_load_kw) == 0:
            return np.full(g.n_steps, float(self.base_load_kw))
        prof = np.asarray(self.base_load_kw, dtype=float)
        if prof.shape != (g.n_steps,):
            raise ValueError(f"base load profile has {prof.size} entries, grid has {g.n_steps}")
        return prof


@dataclass(frozen=True, eq=False)
class Scenario:
    seed: int
    sessions: tuple[PevSession, ...]
    base_load: np.ndarray
    scenario_id: int = 0

    def __post_init__(self):
        base = np.asarray(self.base_load, dtype=float)
        base.setflags(write=False)
        object.__setattr__(self, "base_load", base)
        object.__setattr__(self, "sessions", tuple(self.sessions))

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.scenario_id == other.scenario_id
            and self.sessions == other.sessions
            and np.array_equal(self.base_load, other.base_load)
        )


def _deliverable(s: PevSession, c: ChargerSpec, g: TimeGrid) -> bool:
    return plugin_energy_need(s, c) <= plugin_max_energy(s, c, g) + 1e-9


def sample_scenario(
    m: BehaviorModel,
    g: TimeGrid,
    seed: int,
    charger: ChargerSpec | None = None,
    scenario_id: int = 0,
) -> Scenario:
    """Draw one day of sessions.

    Each vehicle is redrawn until ``t_arr < t_dep`` and
    ``soc_arr <= soc_dep <= soc_max``; with ``charger`` given, also until its
    plug-in energy need fits inside its (grid-snapped) window.
    """
    rng = np.random.default_rng(seed)
    n = m.n_pevs_per_day
    t_arr, t_dep = np.empty(n), np.empty(n)
    soc_arr, soc_dep = np.empty(n), np.empty(n)
    todo = np.arange(n)
    for _ in range(MAX_TRIES):
        if todo.size == 0:
            break
        k = todo.size
        ta = m.dist_t_arr.sample(rng, k)
        td = m.dist_t_dep.sample(rng, k)
        sa = m.dist_soc_arr.sample(rng, k)
        sd = m.dist_soc_dep.sample(rng, k)
        ok = (ta < td) & (sa <= sd) & (sd <= m.soc_max)
        if charger is not None:
            for j in np.flatnonzero(ok):
                s = PevSession(0, ta[j], td[j], sa[j], sd[j], m.soc_max, m.battery_kwh, m.dt_itc)
                if session_window(s, g).n_steps == 0 or not _deliverable(s, charger, g):
                    ok[j] = False
        idx = todo[ok]
        t_arr[idx], t_dep[idx], soc_arr[idx], soc_dep[idx] = ta[ok], td[ok], sa[ok], sd[ok]
        todo = todo[~ok]
    if todo.size:
        raise DegenerateModel(f"{todo.size} vehicles rejected {MAX_TRIES} times; check the behaviour model")
    sessions = tuple(
        PevSession(
            id=i,
            t_arr=float(t_arr[i]),
            t_dep=float(t_dep[i]),
            soc_arr=float(soc_arr[i]),
            soc_dep=float(soc_dep[i]),
            soc_max=m.soc_max,
            battery_kwh=m.battery_kwh,
            dt_itc=m.dt_itc,
        )
        for i in range(n)
    )
    base = m.base_profile(g)
    if m.base_load_noise_kw > 0:
        base = np.maximum(0.0, base + rng.normal(0.0, m.base_load_noise_kw, g.n_steps))
    return Scenario(seed, sessions, base, scenario_id)


def scenario_seeds(seed: int, n: int, stream: int = 0) -> list[int]:
    """Independent per-scenario seeds derived from one study seed.

    Different ``stream`` values give disjoint draws (e.g. planning vs operation days).
    """
    extra = [stream] if stream else []
    return [int(np.random.SeedSequence([seed, j, *extra]).generate_state(1)[0]) for j in range(n)]


def sample_scenarios(
    m: BehaviorModel,
    g: TimeGrid,
    seed: int,
    n: int,
    charger: ChargerSpec | None = None,
    workers: int | None = None,
    stream: int = 0,
) -> list[Scenario]:
    from .parallel import parallel_map

    seeds = scenario_seeds(seed, n, stream)
    jobs = [(m, g, s, charger, j) for j, s in enumerate(seeds)]
    return parallel_map(_sample_job, jobs, workers)


def _sample_job(args) -> Scenario:
    m, g, s, charger, j = args
    return sample_scenario(m, g, s, charger, j)


BOUND_NAMES = (
    "p_lo", "p_hi", "e_lo", "e_hi",
    "pp_lo", "pp_hi", "ep_lo", "ep_hi",
    "p_base",
    "pitc_energy_cap", "pitc_energy_floor",
)


@dataclass(frozen=True, eq=False)
class BoundDistributions:
    """Per-scenario aggregate bounds, one ``(n_scenarios, n_steps)`` array per name.

    ``pitc_energy_cap``/``pitc_energy_floor`` are the stochastic right-hand
    sides of the interchange energy band: cumulative plug-in energy
    ``sum(pp_hi) * eta * dt`` minus ``ep_lo`` (cap) or ``ep_hi`` (floor).
    """

    grid: TimeGrid
    samples: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_scenarios(self) -> int:
        return next(iter(self.samples.values())).shape[0]

    def param(self, name: str, form: str = "gaussian") -> StochasticParam:
        return StochasticParam.from_samples(self.samples[name], form)


def scenario_bounds(sc: Scenario, c: ChargerSpec, g: TimeGrid) -> dict[str, np.ndarray]:
    ch = aggregate([charging_envelope(s, c, g) for s in sc.sessions], g)
    pl = aggregate([plugin_envelope(s, c, g) for s in sc.sessions], g)
    if sc.base_load.shape != (g.n_steps,):
        raise ValueError(f"scenario {sc.scenario_id}: base load length does not match grid")
    cum_plugin = np.cumsum(pl.p_hi) * c.eta * g.dt
    return {
        "p_lo": ch.p_lo, "p_hi": ch.p_hi, "e_lo": ch.e_lo, "e_hi": ch.e_hi,
        "pp_lo": pl.p_lo, "pp_hi": pl.p_hi, "ep_lo": pl.e_lo, "ep_hi": pl.e_hi,
        "p_base": sc.base_load,
        "pitc_energy_cap": cum_plugin - pl.e_lo,
        "pitc_energy_floor": cum_plugin - pl.e_hi,
    }


def estimate_bound_distributions(
    scenarios: Sequence[Scenario], c: ChargerSpec, g: TimeGrid
) -> BoundDistributions:
    if len(scenarios) < 2:
        raise ValueError("need at least two scenarios to estimate a spread")
    per = [scenario_bounds(sc, c, g) for sc in scenarios]
    return BoundDistributions(g, {name: np.array([p[name] for p in per]) for name in BOUND_NAMES})
