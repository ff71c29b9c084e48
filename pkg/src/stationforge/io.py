"""Study configuration (YAML) and schema-checked CSV files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from .core import ChargerSpec, PevSession, TimeGrid
from .planner import CASE_ITC_OPER, ITC_EVENT_KWH, CostParameters, GridLimits, tou_prices
from .scenario import BehaviorModel, Scenario, TruncNormal


class ConfigError(ValueError):
    def __init__(self, msg: str, source: str = "<config>", line: int | None = None):
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {msg}")


class SchemaError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration

_DIST = ("mean", "std", "lower", "upper")
_SECTIONS: dict[str, dict[str, Any]] = {
    "grid": {"t0": float, "dt": float, "n_steps": int},
    "behavior": {
        "n_pevs_per_day": int,
        "t_arr": _DIST, "t_dep": _DIST, "soc_arr": _DIST, "soc_dep": _DIST,
        "soc_max": float, "dt_itc": float, "battery_kwh": float,
        "consumption_kwh_per_km": float, "base_load_kw": "profile", "base_load_noise_kw": float,
    },
    "charger": {"p_rated": float, "eta": float},
    "costs": {
        "case": str, "c_ch": float, "c_ed": float, "c_loss": float,
        "discount_rate": float, "lifetime_years": int, "tou": "tou",
        "c_itc_plan": float, "c_itc_oper": float,
    },
    "limits": {"p_tran_min": float, "p_tran_max": float},
    "study": {"epsilon": float, "n_scenarios": int, "seed": int, "form": str, "out": str},
}
# only needed when the preset does not supply them
_OPTIONAL = {("costs", "c_itc_plan"), ("costs", "c_itc_oper")}
CASES = ("0", "1", "2", "custom")


@dataclass(frozen=True, eq=False)
class StudyConfig:
    grid: TimeGrid
    behavior: BehaviorModel
    charger: ChargerSpec
    costs: CostParameters
    limits: GridLimits
    case: str
    epsilon: float
    n_scenarios: int
    seed: int
    form: str
    out: Path

    def with_overrides(self, *, seed=None, n_scenarios=None, case=None, epsilon=None, out=None) -> StudyConfig:
        from dataclasses import replace

        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if n_scenarios is not None:
            if n_scenarios < 2:
                raise ConfigError("--scenarios must be at least 2")
            cfg = replace(cfg, n_scenarios=n_scenarios)
        if case is not None:
            cfg = replace(cfg, case=case, costs=cfg.costs.for_case(case))
        if epsilon is not None:
            if not 0 < epsilon <= 0.5:
                raise ConfigError(f"--epsilon must lie in (0, 0.5], got {epsilon}")
            cfg = replace(cfg, epsilon=epsilon)
        if out is not None:
            cfg = replace(cfg, out=Path(out))
        return cfg


def _compose(text: str, source: str):
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        if node is None:
            raise ConfigError("empty configuration", source, 1)
        data = loader.construct_document(node)
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark else None
        raise ConfigError(f"YAML syntax: {e.problem}", source, line) from None
    finally:
        loader.dispose()
    return node, data


def _key_lines(node) -> dict[tuple[str, ...], int]:
    lines: dict[tuple[str, ...], int] = {}

    def walk(n, path):
        lines[path] = n.start_mark.line + 1
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                p = path + (str(k.value),)
                lines[p] = k.start_mark.line + 1
                walk(v, p)
                lines[p] = k.start_mark.line + 1

    walk(node, ())
    return lines


def _number(v, want, where, err):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        if want is float and isinstance(v, str) and v.strip().lower() in ("inf", "+inf", ".inf"):
            return math.inf
        raise err(f"{where}: expected a number, got {v!r}")
    if want is int:
        if int(v) != v:
            raise err(f"{where}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def parse_config(text: str, source: str = "<config>") -> StudyConfig:
    node, data = _compose(text, source)
    lines = _key_lines(node)

    def err_at(path):
        return lambda msg: ConfigError(msg, source, lines.get(path))

    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping of sections", source, 1)
    for name in data:
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section {name!r}", source, lines.get((name,)))
    vals: dict[str, dict[str, Any]] = {}
    for sec, keys in _SECTIONS.items():
        if sec not in data:
            raise ConfigError(f"missing section {sec!r}", source, 1)
        body = data[sec]
        if not isinstance(body, dict):
            raise ConfigError(f"section {sec!r} must be a mapping", source, lines.get((sec,)))
        for k in body:
            if k not in keys:
                raise ConfigError(f"unknown key {sec}.{k}", source, lines.get((sec, k)))
        vals[sec] = {}
        for k, kind in keys.items():
            path = (sec, k)
            if k not in body:
                if path in _OPTIONAL:
                    continue
                raise ConfigError(f"missing key {sec}.{k}", source, lines.get((sec,)))
            v = body[k]
            err = err_at(path)
            where = f"{sec}.{k}"
            if kind in (float, int):
                vals[sec][k] = _number(v, kind, where, err)
            elif kind is str:
                vals[sec][k] = str(v)
            elif kind == _DIST:
                if not isinstance(v, dict) or set(v) != set(_DIST):
                    raise err(f"{where}: expected a mapping with keys {', '.join(_DIST)}")
                vals[sec][k] = {d: _number(v[d], float, f"{where}.{d}", err_at(path + (d,))) for d in _DIST}
            elif kind == "profile":
                if isinstance(v, list):
                    vals[sec][k] = tuple(_number(x, float, where, err) for x in v)
                else:
                    vals[sec][k] = _number(v, float, where, err)
            elif kind == "tou":
                if not isinstance(v, list) or not all(isinstance(w, list) and len(w) == 3 for w in v):
                    raise err(f"{where}: expected a list of [start_h, end_h, price] triples")
                vals[sec][k] = tuple(tuple(_number(x, float, where, err) for x in w) for w in v)

    def build(path, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(str(e), source, lines.get(path)) from None

    g = build(("grid",), lambda: TimeGrid(**vals["grid"]))
    b = vals["behavior"]
    behavior = build(("behavior",), lambda: BehaviorModel(
        n_pevs_per_day=b["n_pevs_per_day"],
        dist_t_arr=TruncNormal(**b["t_arr"]),
        dist_t_dep=TruncNormal(**b["t_dep"]),
        dist_soc_arr=TruncNormal(**b["soc_arr"]),
        dist_soc_dep=TruncNormal(**b["soc_dep"]),
        soc_max=b["soc_max"],
        dt_itc=b["dt_itc"],
        battery_kwh=b["battery_kwh"],
        consumption_kwh_per_km=b["consumption_kwh_per_km"],
        base_load_kw=b["base_load_kw"],
        base_load_noise_kw=b["base_load_noise_kw"],
    ))
    build(("behavior", "base_load_kw"), lambda: behavior.base_profile(g))
    charger = build(("charger",), lambda: ChargerSpec(**vals["charger"]))
    c = vals["costs"]
    case = c["case"]
    if case not in CASES:
        raise ConfigError(f"costs.case must be one of {', '.join(CASES)}, got {case!r}", source, lines.get(("costs", "case")))
    if case == "custom":
        for k in ("c_itc_plan", "c_itc_oper"):
            if k not in c:
                raise ConfigError(f"missing key costs.{k} (required for case custom)", source, lines.get(("costs",)))
    prices = build(("costs", "tou"), lambda: tou_prices(g, c["tou"]))
    costs = build(("costs",), lambda: CostParameters(
        c_e=prices, c_ch=c["c_ch"], c_ed=c["c_ed"], c_loss=c["c_loss"],
        c_itc_plan=c.get("c_itc_plan", math.inf), c_itc_oper=c.get("c_itc_oper", math.inf),
        discount_rate=c["discount_rate"], lifetime_years=c["lifetime_years"],
    ).for_case(case))
    limits = build(("limits",), lambda: GridLimits(**vals["limits"]))
    s = vals["study"]
    if not 0 < s["epsilon"] <= 0.5:
        raise ConfigError(f"study.epsilon must lie in (0, 0.5], got {s['epsilon']}", source, lines.get(("study", "epsilon")))
    if s["n_scenarios"] < 2:
        raise ConfigError("study.n_scenarios must be at least 2", source, lines.get(("study", "n_scenarios")))
    if s["form"] not in ("gaussian", "empirical"):
        raise ConfigError("study.form must be gaussian or empirical", source, lines.get(("study", "form")))
    return StudyConfig(g, behavior, charger, costs, limits, case, s["epsilon"], s["n_scenarios"], s["seed"], s["form"], Path(s["out"]))


def load_config(path: str | Path) -> StudyConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(path)) from None
    return parse_config(text, str(path))


# --------------------------------------------------------------------------
# CSV

SCHEMAS: dict[str, tuple[tuple[str, type], ...]] = {
    "scenarios": (("scenario_id", int), ("pev_id", int), ("t_arr_h", float), ("t_dep_h", float),
                  ("soc_arr", float), ("soc_dep", float), ("battery_kwh", float), ("dt_itc_h", float)),
    "base_load": (("t_index", int), ("p_base_kw", float)),
    "plan": (("case", str), ("x_chargers", int), ("capital_usd", float), ("demand_charge_usd", float),
             ("energy_usd", float), ("shedding_usd", float), ("itc_plan_usd", float), ("total_usd", float)),
    "profile": (("t_index", int), ("p_kw", float), ("p_loss_kw", float), ("p_pitc_kw", float), ("p_grid_kw", float)),
    "oplog": (("t_index", int), ("pev_id", int), ("charger_id", int), ("p_kw", float), ("event", str)),
    "kpi": (("scenario_id", int), ("case", str), ("x_chargers", int), ("n_pevs", int), ("utilization", float),
            ("occupancy", float), ("interchanges", int), ("unmet_kwh", float), ("mean_wait_h", float),
            ("peak_kw", float), ("energy_usd", float), ("demand_charge_usd", float), ("shedding_usd", float),
            ("itc_event_usd", float), ("capital_usd", float), ("total_usd", float), ("operating_cost_day_usd", float)),
    "timeseries": (("t_index", int), ("t_h", float), ("grid_kw", float), ("pev_kw", float), ("base_kw", float),
                   ("chargers_plugged", int), ("chargers_charging", int), ("vehicles_present", int),
                   ("queue_len", int), ("interchanges", int)),
    "epsilon_check": (("family", str), ("epsilon", float), ("satisfaction_rate", float),
                      ("min_step_rate", float), ("target", float), ("steps", int)),
}
OPLOG_EVENTS = {"", "arrive", "plug", "interchange_out", "interchange_in", "depart", "shed"}


def _fmt(v, kind) -> str:
    if kind is float:
        return repr(float(v))
    if kind is int:
        return str(int(v))
    return str(v)


def _parse(v: str, kind, where: str):
    try:
        return kind(v)
    except ValueError:
        raise SchemaError(f"{where}: cannot parse {v!r} as {kind.__name__}") from None


def write_csv(path: str | Path, schema: str, rows: Iterable[Sequence]) -> Path:
    """Write rows under ``schema`` and re-read the file to check it parses."""
    cols = SCHEMAS[schema]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([c for c, _ in cols])
        for r in rows:
            if len(r) != len(cols):
                raise SchemaError(f"{path}: row has {len(r)} fields, schema {schema} has {len(cols)}")
            w.writerow([_fmt(v, k) for v, (_, k) in zip(r, cols)])
    read_csv(path, schema)
    return path


def read_csv(path: str | Path, schema: str) -> list[dict[str, Any]]:
    cols = SCHEMAS[schema]
    path = Path(path)
    with path.open(newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header != [c for c, _ in cols]:
            raise SchemaError(f"{path}: header {header} does not match schema {schema}")
        out = []
        for lineno, row in enumerate(r, start=2):
            if len(row) != len(cols):
                raise SchemaError(f"{path}:{lineno}: expected {len(cols)} fields, got {len(row)}")
            out.append({c: _parse(v, k, f"{path}:{lineno}:{c}") for v, (c, k) in zip(row, cols)})
    if schema == "oplog":
        for i, rec in enumerate(out, start=2):
            if rec["event"] not in OPLOG_EVENTS:
                raise SchemaError(f"{path}:{i}: unknown event {rec['event']!r}")
    return out


def write_scenarios(out_dir: str | Path, scenarios: Sequence[Scenario]) -> None:
    out_dir = Path(out_dir)
    rows = [
        (sc.scenario_id, s.id, s.t_arr, s.t_dep, s.soc_arr, s.soc_dep, s.battery_kwh, s.dt_itc)
        for sc in scenarios
        for s in sc.sessions
    ]
    write_csv(out_dir / "scenarios.csv", "scenarios", rows)
    for sc in scenarios:
        write_csv(out_dir / f"base_load_{sc.scenario_id}.csv", "base_load", list(enumerate(sc.base_load)))
    meta = {str(sc.scenario_id): sc.seed for sc in scenarios}
    (out_dir / "scenario_seeds.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def read_scenarios(in_dir: str | Path, soc_max: float = 0.95) -> list[Scenario]:
    """Inverse of :func:`write_scenarios`; ``soc_max`` is not part of the file format."""
    in_dir = Path(in_dir)
    rows = read_csv(in_dir / "scenarios.csv", "scenarios")
    seeds_file = in_dir / "scenario_seeds.json"
    seeds = json.loads(seeds_file.read_text()) if seeds_file.exists() else {}
    sessions: dict[int, list[PevSession]] = {}
    for r in rows:
        sessions.setdefault(r["scenario_id"], []).append(PevSession(
            r["pev_id"], r["t_arr_h"], r["t_dep_h"], r["soc_arr"], r["soc_dep"],
            soc_max, r["battery_kwh"], r["dt_itc_h"],
        ))
    ids = set(sessions) | {int(p.stem.rsplit("_", 1)[1]) for p in in_dir.glob("base_load_*.csv")}
    out = []
    for sid in sorted(ids):
        base = read_csv(in_dir / f"base_load_{sid}.csv", "base_load")
        out.append(Scenario(int(seeds.get(str(sid), sid)), tuple(sessions.get(sid, ())),
                            np.array([b["p_base_kw"] for b in base]), sid))
    return out
