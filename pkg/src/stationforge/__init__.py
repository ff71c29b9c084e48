"""Charging station sizing under uncertain driver behaviour, with charger interchange."""

from .chance import (
    DomainError,
    ReliabilityLevel,
    StochasticParam,
    deterministic_lower,
    deterministic_upper,
    std_normal_quantile,
)
from .core import (
    ChargerSpec,
    DemandEnvelope,
    GridMismatch,
    InfeasibleSession,
    PevSession,
    TimeGrid,
    aggregate,
    charging_envelope,
    energy_need,
    plugin_energy_need,
    plugin_envelope,
)
from .lp import LinearProgram, LpSolution, enumerate_vertices, solve
from .opsim import KpiReport, OperationLog, OperationPolicy, clairvoyant_cost, simulate_day
from .planner import (
    CostParameters,
    GridLimits,
    ModelError,
    PlanningSolution,
    build_planning_lp,
    capital_recovery_factor,
    default_costs,
    plan_case,
    reformulate,
    solve_plan,
)
from .scenario import BehaviorModel, Scenario, estimate_bound_distributions, sample_scenario, sample_scenarios

__all__ = [name for name in dir() if not name.startswith("_")]
