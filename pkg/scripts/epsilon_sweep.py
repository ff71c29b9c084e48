"""Charger count and annual cost versus the violation tolerance, per interchange case.

    python3 scripts/epsilon_sweep.py --out results/epsilon_sweep.csv
"""

import argparse
import csv
from pathlib import Path

from stationforge.core import ChargerSpec, TimeGrid
from stationforge.parallel import parallel_map
from stationforge.planner import GridLimits, default_costs, plan_case
from stationforge.scenario import BehaviorModel, estimate_bound_distributions, sample_scenarios

EPSILONS = (0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5)


def _plan(job):
    dists, case, eps, form = job
    g, c = dists.grid, ChargerSpec()
    p = plan_case(dists, default_costs(g), GridLimits(), c, case, eps, form)
    return case, eps, form, p.x_relaxed, p.x_chargers, p.total_annual_cost


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/epsilon_sweep.csv")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--scenarios", type=int, default=200)
    args = ap.parse_args()

    g, c = TimeGrid(), ChargerSpec()
    dists = estimate_bound_distributions(sample_scenarios(BehaviorModel(), g, args.seed, args.scenarios, c), c, g)
    jobs = [(dists, case, eps, form) for form in ("gaussian", "empirical") for case in "012" for eps in EPSILONS]
    rows = parallel_map(_plan, jobs)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["case", "epsilon", "form", "x_relaxed", "x_chargers", "total_usd"])
        w.writerows(rows)
    for case, eps, form, xr, x, total in rows:
        print(f"{form:<9} case {case}  eps {eps:<5} X {x:3d} ({xr:7.3f})  total {total:10.0f} $/yr")


if __name__ == "__main__":
    main()
