"""Domain types and envelope algebra for PEV charging and plug-in demand.

Conventions
-----------
A :class:`TimeGrid` has ``n_steps`` steps of length ``dt`` hours starting at
``t0``. Step ``k`` covers ``[t0 + k*dt, t0 + (k+1)*dt)``. Envelope entries are
indexed by step and evaluated at the step's *end stamp*
``tau_k = t0 + (k+1)*dt``: power bounds apply over step ``k`` and energy
bounds are the cumulative battery-side energy delivered by ``tau_k``.

Power is grid-side (kW); energy is battery-side (kWh), so one full step at
rated power adds ``p_rated * eta * dt`` kWh.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_SNAP_TOL = 1e-9


class InfeasibleSession(ValueError):
    """A session's energy need cannot be delivered inside its window."""


class GridMismatch(ValueError):
    """Envelopes or profiles defined on different time grids."""


@dataclass(frozen=True)
class TimeGrid:
    t0: float = 0.0
    dt: float = 0.25
    n_steps: int = 96

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.n_steps * self.dt > 24 + _SNAP_TOL:
            raise ValueError("a daily grid cannot span more than 24 h")

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_steps * self.dt

    @property
    def starts(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps)

    @property
    def stamps(self) -> np.ndarray:
        """End-of-step time stamps, the points where energy bounds are evaluated."""
        return self.t0 + self.dt * np.arange(1, self.n_steps + 1)

    def index_of_stamp(self, tau: float) -> int:
        k = round((tau - self.t0) / self.dt) - 1
        if not 0 <= k < self.n_steps or abs(self.t0 + (k + 1) * self.dt - tau) > 1e-6:
            raise ValueError(f"{tau} is not an end stamp of {self}")
        return k

    def snap_arrival(self, t: float) -> int:
        """First step fully after arrival (arrival rounds up)."""
        return math.ceil((t - self.t0) / self.dt - _SNAP_TOL)

    def snap_departure(self, t: float) -> int:
        """Step index at which the vehicle is gone (departure rounds down)."""
        return math.floor((t - self.t0) / self.dt + _SNAP_TOL)


@dataclass(frozen=True)
class PevSession:
    id: int
    t_arr: float
    t_dep: float
    soc_arr: float
    soc_dep: float
    soc_max: float = 0.95
    battery_kwh: float = 24.0
    dt_itc: float = 0.0

    def __post_init__(self):
        if not 0 <= self.soc_arr <= self.soc_dep <= self.soc_max <= 1:
            raise ValueError(
                f"session {self.id}: need 0 <= soc_arr <= soc_dep <= soc_max <= 1, "
                f"got {self.soc_arr}, {self.soc_dep}, {self.soc_max}"
            )
        if not self.t_arr < self.t_dep:
            raise ValueError(f"session {self.id}: t_arr must precede t_dep")
        if not self.battery_kwh > 0:
            raise ValueError(f"session {self.id}: battery_kwh must be positive")
        if self.dt_itc < 0:
            raise ValueError(f"session {self.id}: dt_itc must be non-negative")


@dataclass(frozen=True)
class ChargerSpec:
    p_rated: float = 6.6
    eta: float = 0.9

    def __post_init__(self):
        if not self.p_rated > 0:
            raise ValueError("p_rated must be positive")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")

    def step_energy(self, dt: float) -> float:
        """Battery-side energy of one full step at rated power."""
        return self.p_rated * self.eta * dt


@dataclass(frozen=True, eq=False)
class DemandEnvelope:
    grid: TimeGrid
    p_lo: np.ndarray
    p_hi: np.ndarray
    e_lo: np.ndarray
    e_hi: np.ndarray

    def __post_init__(self):
        for name in ("p_lo", "p_hi", "e_lo", "e_hi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.grid.n_steps,):
                raise ValueError(f"{name} has shape {arr.shape}, grid has {self.grid.n_steps} steps")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, grid: TimeGrid) -> DemandEnvelope:
        z = np.zeros(grid.n_steps)
        return cls(grid, z, z, z, z)

    def __add__(self, other: DemandEnvelope) -> DemandEnvelope:
        if other.grid != self.grid:
            raise GridMismatch(f"{self.grid} vs {other.grid}")
        return DemandEnvelope(
            self.grid,
            self.p_lo + other.p_lo,
            self.p_hi + other.p_hi,
            self.e_lo + other.e_lo,
            self.e_hi + other.e_hi,
        )

    def allclose(self, other: DemandEnvelope, atol: float = 1e-9) -> bool:
        return self.grid == other.grid and all(
            np.allclose(getattr(self, n), getattr(other, n), rtol=0, atol=atol)
            for n in ("p_lo", "p_hi", "e_lo", "e_hi")
        )

    def check(self, eta: float, atol: float = 1e-9) -> None:
        """Raise AssertionError if the envelope invariants do not hold."""
        assert np.all(self.p_lo <= self.p_hi + atol), "p_lo > p_hi"
        assert np.all(self.e_lo <= self.e_hi + atol), "e_lo > e_hi"
        assert np.all(np.diff(self.e_lo) >= -atol), "e_lo decreasing"
        assert np.all(np.diff(self.e_hi) >= -atol), "e_hi decreasing"
        rise = np.diff(self.e_hi, prepend=0.0)
        assert np.all(rise <= self.p_hi * eta * self.grid.dt + atol), "e_hi rises faster than p_hi"


@dataclass(frozen=True)
class SessionWindow:
    """A session snapped onto a grid: present for steps ``a <= k < d``."""

    a: int
    d: int
    clipped: bool = field(default=False, compare=False)

    @property
    def n_steps(self) -> int:
        return max(0, self.d - self.a)


def session_window(s: PevSession, g: TimeGrid) -> SessionWindow:
    a, d = g.snap_arrival(s.t_arr), g.snap_departure(s.t_dep)
    clipped = a < 0 or d > g.n_steps
    if clipped:
        warnings.warn(f"session {s.id} [{s.t_arr}, {s.t_dep}] h clipped to grid", stacklevel=2)
    a, d = max(a, 0), min(d, g.n_steps)
    return SessionWindow(a, max(a, d), clipped)


def energy_need(s: PevSession) -> float:
    return (s.soc_dep - s.soc_arr) * s.battery_kwh


def max_energy(s: PevSession, c: ChargerSpec, g: TimeGrid) -> float:
    w = session_window(s, g)
    headroom = (s.soc_max - s.soc_arr) * s.battery_kwh
    return min(headroom, c.step_energy(g.dt) * w.n_steps)


def charging_envelope(s: PevSession, c: ChargerSpec, g: TimeGrid) -> DemandEnvelope:
    """Bounds on one vehicle's actual charging.

    ``e_hi`` is immediate charging at rated power up to ``e_max``; ``e_lo`` is
    the latest start that still reaches ``e_need`` at departure.
    """
    w = session_window(s, g)
    r = c.step_energy(g.dt)
    need = energy_need(s)
    window_energy = r * w.n_steps
    if need > window_energy + 1e-9:
        raise InfeasibleSession(
            f"session {s.id} needs {need:.4g} kWh but can receive at most {window_energy:.4g} kWh"
        )
    e_max = min((s.soc_max - s.soc_arr) * s.battery_kwh, window_energy)
    k = np.arange(g.n_steps)
    inside = (k >= w.a) & (k < w.d)
    after = k >= w.d

    e_hi = np.where(inside, np.minimum(r * (k - w.a + 1), e_max), 0.0)
    e_hi = np.where(after, e_max, e_hi)
    e_lo = np.where(inside, np.maximum(0.0, need - r * (w.d - k - 1)), 0.0)
    e_lo = np.where(after, need, e_lo)
    p_hi = np.where(inside, c.p_rated, 0.0)
    return DemandEnvelope(g, np.zeros(g.n_steps), p_hi, e_lo, e_hi)


def plugin_energy_need(s: PevSession, c: ChargerSpec) -> float:
    return energy_need(s) + c.p_rated * c.eta * s.dt_itc


def plugin_max_energy(s: PevSession, c: ChargerSpec, g: TimeGrid) -> float:
    return c.step_energy(g.dt) * session_window(s, g).n_steps


def plugin_envelope(s: PevSession, c: ChargerSpec, g: TimeGrid) -> DemandEnvelope:
    """Plug-in power/energy bounds: what the vehicle occupies, not what it draws."""
    w = session_window(s, g)
    r = c.step_energy(g.dt)
    e_pneed = plugin_energy_need(s, c)
    e_pmax = r * w.n_steps
    if e_pneed > e_pmax + 1e-9:
        raise InfeasibleSession(
            f"session {s.id}: plug-in need {e_pneed:.4g} kWh exceeds plug-in maximum {e_pmax:.4g} kWh"
        )
    k = np.arange(g.n_steps)
    inside = (k >= w.a) & (k < w.d)
    after = k >= w.d

    # the recursive min(prev + r, e_pmax) unrolls to min(r * steps so far, e_pmax)
    e_hi = np.where(inside, np.minimum(r * (k - w.a + 1), e_pmax), 0.0)
    e_hi = np.where(after, e_pmax, e_hi)
    e_lo = np.where(inside, np.maximum(0.0, e_pneed - r * (w.d - k - 1)), 0.0)
    e_lo = np.where(after, e_pneed, e_lo)
    p_hi = np.where(inside, c.p_rated, 0.0)
    return DemandEnvelope(g, np.zeros(g.n_steps), p_hi, e_lo, e_hi)


def aggregate(envelopes: Sequence[DemandEnvelope], grid: TimeGrid | None = None) -> DemandEnvelope:
    """Elementwise sum. ``grid`` is required to aggregate an empty list."""
    envelopes = list(envelopes)
    if not envelopes:
        if grid is None:
            raise ValueError("aggregate of an empty list needs an explicit grid")
        return DemandEnvelope.zeros(grid)
    g = envelopes[0].grid if grid is None else grid
    for env in envelopes:
        if env.grid != g:
            raise GridMismatch(f"{env.grid} vs {g}")
    return DemandEnvelope(
        g,
        np.sum([e.p_lo for e in envelopes], axis=0),
        np.sum([e.p_hi for e in envelopes], axis=0),
        np.sum([e.e_lo for e in envelopes], axis=0),
        np.sum([e.e_hi for e in envelopes], axis=0),
    )
