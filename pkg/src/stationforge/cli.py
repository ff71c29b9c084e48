"""Command-line entry points: ``plan``, ``simulate``, ``validate``, ``gen-scenarios``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import GridMismatch, TimeGrid
from .io import ConfigError, SchemaError, StudyConfig, load_config, read_csv, read_scenarios, write_csv, write_scenarios
from .opsim import simulate_day
from .parallel import parallel_map
from .planner import ModelError, PlanningSolution, plan_case, satisfaction_rates
from .scenario import DegenerateModel, estimate_bound_distributions, sample_scenarios, scenario_bounds

log = logging.getLogger("stationforge")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_GRID = 0, 2, 3, 4
SIMULATION_STREAM = 1  # seed stream for fresh operation days, distinct from planning draws


def _training_scenarios(cfg: StudyConfig, from_dir: str | None):
    if from_dir:
        scs = read_scenarios(from_dir, cfg.behavior.soc_max)
        for sc in scs:
            if sc.base_load.shape != (cfg.grid.n_steps,):
                raise GridMismatch(f"scenario {sc.scenario_id} base load has {sc.base_load.size} steps, grid has {cfg.grid.n_steps}")
        return scs
    return sample_scenarios(cfg.behavior, cfg.grid, cfg.seed, cfg.n_scenarios, cfg.charger)


def _summary(cfg: StudyConfig, plan: PlanningSolution) -> str:
    b = plan.breakdown()
    lines = [
        f"case {plan.case}  epsilon {cfg.epsilon}  scenarios {cfg.n_scenarios}  seed {cfg.seed}",
        f"chargers            {plan.x_chargers}  (relaxed {plan.x_relaxed:.4f})",
        f"planned peak        {plan.p_max_grid:.3f} kW",
        "annual cost (USD)",
    ]
    for k in ("capital_usd", "demand_charge_usd", "energy_usd", "shedding_usd", "itc_plan_usd", "total_usd"):
        lines.append(f"  {k[:-4]:<17} {b[k]:12.2f}")
    return "\n".join(lines) + "\n"


def cmd_plan(cfg: StudyConfig, from_dir: str | None = None) -> int:
    scs = _training_scenarios(cfg, from_dir)
    dists = estimate_bound_distributions(scs, cfg.charger, cfg.grid)
    plan = plan_case(dists, cfg.costs, cfg.limits, cfg.charger, cfg.case, cfg.epsilon, cfg.form)
    out = cfg.out
    b = plan.breakdown()
    write_csv(out / "plan.csv", "plan", [(plan.case, plan.x_chargers, b["capital_usd"], b["demand_charge_usd"],
                                          b["energy_usd"], b["shedding_usd"], b["itc_plan_usd"], b["total_usd"])])
    write_csv(out / "profile.csv", "profile", [
        (t, plan.p[t], plan.p_loss[t], plan.p_pitc[t], plan.p_grid[t]) for t in range(cfg.grid.n_steps)
    ])
    meta = {"grid": {"t0": cfg.grid.t0, "dt": cfg.grid.dt, "n_steps": cfg.grid.n_steps},
            "case": plan.case, "x_chargers": plan.x_chargers, "epsilon": cfg.epsilon}
    (out / "plan.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    text = _summary(cfg, plan)
    (out / "summary.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _load_plan(cfg: StudyConfig, plan_dir: Path) -> tuple[int, str]:
    meta = json.loads((plan_dir / "plan.json").read_text())
    g = TimeGrid(**meta["grid"])
    profile = read_csv(plan_dir / "profile.csv", "profile")
    if g != cfg.grid or len(profile) != cfg.grid.n_steps:
        raise GridMismatch(f"plan grid {g} does not match config grid {cfg.grid}")
    row = read_csv(plan_dir / "plan.csv", "plan")[0]
    return row["x_chargers"], row["case"]


def _simulate_job(args):
    cfg, sc, x = args
    oplog, k = simulate_day(sc, x, cfg.charger, cfg.grid, cfg.costs, limits=cfg.limits)
    return sc.scenario_id, oplog, k


def cmd_simulate(cfg: StudyConfig, plan_dir: Path, validate_epsilon: bool = False) -> int:
    x, case = _load_plan(cfg, plan_dir)
    if case != cfg.case:
        log.warning("plan was made for case %s, simulating with case %s costs", case, cfg.case)
    days = sample_scenarios(cfg.behavior, cfg.grid, cfg.seed, cfg.n_scenarios, cfg.charger, stream=SIMULATION_STREAM)
    out = cfg.out
    kpi_rows = []
    for sid, oplog, k in parallel_map(_simulate_job, [(cfg, sc, x) for sc in days]):
        write_csv(out / f"oplog_{sid}.csv", "oplog", oplog.rows())
        itc_at = {}
        for e in oplog.interchanges:
            itc_at[e.t_index] = itc_at.get(e.t_index, 0) + 1
        write_csv(out / f"timeseries_{sid}.csv", "timeseries", [
            (r.t_index, cfg.grid.starts[r.t_index], r.grid_kw, r.pev_kw, r.base_kw, len(r.plugged),
             r.charging, r.present, r.queue_len, itc_at.get(r.t_index, 0))
            for r in oplog.records
        ])
        kpi_rows.append((sid, case, k.x_chargers, k.n_pevs, k.utilization, k.occupancy, k.interchanges, k.unmet_kwh,
                         k.mean_wait_h, k.peak_kw, k.energy_usd, k.demand_charge_usd, k.shedding_usd,
                         k.itc_event_usd, k.capital_usd, k.total_usd, k.operating_cost_day))
    write_csv(out / "kpi.csv", "kpi", kpi_rows)
    n = len(kpi_rows)
    if n:
        mean = lambda i: sum(r[i] for r in kpi_rows) / n  # noqa: E731
        print(f"simulated {n} days with {x} chargers: utilization {mean(4):.3f}, "
              f"interchanges/day {mean(6):.2f}, unmet {mean(7):.3f} kWh/day")
    if validate_epsilon:
        return _validate_epsilon(cfg, days)
    return EXIT_OK


def _validate_epsilon(cfg: StudyConfig, fresh_days) -> int:
    train = sample_scenarios(cfg.behavior, cfg.grid, cfg.seed, cfg.n_scenarios, cfg.charger)
    dists = estimate_bound_distributions(train, cfg.charger, cfg.grid)
    plan = plan_case(dists, cfg.costs, cfg.limits, cfg.charger, cfg.case, cfg.epsilon, cfg.form)
    fresh = [scenario_bounds(sc, cfg.charger, cfg.grid) for sc in fresh_days]
    target = 1 - cfg.epsilon - 0.05
    rates = satisfaction_rates(plan, fresh, dists, cfg.charger)
    rows = []
    for fam, (rate, worst, steps) in rates.items():
        rows.append((fam, cfg.epsilon, rate, worst, target, steps))
        print(f"{fam:<24} satisfied {rate:.3f} (worst step {worst:.3f}, {steps} steps)  target >= {target:.3f}"
              f"  {'ok' if rate >= target else 'LOW'}")
    write_csv(cfg.out / "epsilon_check.csv", "epsilon_check", rows)
    return EXIT_OK


def cmd_validate(cfg: StudyConfig) -> int:
    c = cfg.costs
    print(f"config ok: {cfg.grid.n_steps} steps of {cfg.grid.dt} h, {cfg.behavior.n_pevs_per_day} PEVs/day, "
          f"case {cfg.case} (c_itc_plan {c.c_itc_plan:g} $/kWh, c_itc_oper {c.c_itc_oper:g} $/event), "
          f"zeta {c.zeta:.6f}, epsilon {cfg.epsilon}")
    return EXIT_OK


def cmd_gen_scenarios(cfg: StudyConfig) -> int:
    scs = sample_scenarios(cfg.behavior, cfg.grid, cfg.seed, cfg.n_scenarios, cfg.charger)
    write_scenarios(cfg.out, scs)
    print(f"wrote {len(scs)} scenarios to {cfg.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stationforge", description="Chance-constrained charging station sizing and operation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML study configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--scenarios", type=int, help="number of Monte-Carlo days")
        sp.add_argument("--case", choices=("0", "1", "2", "custom"))
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--out", help="output directory (overrides study.out)")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("plan", help="size the station")
    common(sp)
    sp.add_argument("--from-scenarios", metavar="DIR", help="plan on scenarios written by gen-scenarios")
    sp = sub.add_parser("simulate", help="operate a plan over fresh days")
    common(sp)
    sp.add_argument("--plan", metavar="DIR", help="directory holding plan.csv/profile.csv/plan.json (default: --out)")
    sp.add_argument("--validate-epsilon", action="store_true", help="report chance-constraint satisfaction rates")
    common(sub.add_parser("validate", help="check a configuration"))
    common(sub.add_parser("gen-scenarios", help="write sampled scenarios as CSV"))
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(
            seed=args.seed, n_scenarios=args.scenarios, case=args.case, epsilon=args.epsilon, out=args.out)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "plan":
            return cmd_plan(cfg, args.from_scenarios)
        if args.command == "simulate":
            return cmd_simulate(cfg, Path(args.plan) if args.plan else cfg.out, args.validate_epsilon)
        if args.command == "validate":
            return cmd_validate(cfg)
        return cmd_gen_scenarios(cfg)
    except GridMismatch as e:
        print(f"error: grid mismatch: {e}", file=sys.stderr)
        return EXIT_GRID
    except (ModelError, DegenerateModel) as e:
        print(f"error: model infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SchemaError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
