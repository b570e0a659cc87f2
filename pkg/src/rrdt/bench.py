"""Experiment harness: scenario execution over planner x pair x repetition
grids, metrics/trace CSV emission, summary tables, and SVG renders.

Reruns of the same experiment file produce byte-identical outputs, also
under parallel execution: per-run seeds are derived from (base_seed,
planner, pair, repetition) and results are merged in task order.
"""

from __future__ import annotations

import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import planners as pl
from .env import (Environment, Scenario, ScenarioError, coerce_scenario_value,
                  load_map, sample_free)
from .render import render_svg
from .rng import derive_seed, substream

TRACE_CADENCE = 100
PRM_TRACE_CADENCE = 250
_PAIR_MIN_DIAG_FRACTION = 0.5


@dataclass
class ExperimentSpec:
    map_path: str
    planners: list[str]
    pair_count: int = 20
    pairs: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    repetitions: int = 20
    node_budget: int = 10000
    base_seed: int = 0
    out_dir: str = "results"
    render: str = "first"  # first | all | none
    obstacle_threshold: float = 0.5
    scenario_overrides: dict = field(default_factory=dict)


_SPEC_KEYS = {"map_path", "planners", "pairs", "pair", "repetitions",
              "node_budget", "base_seed", "out", "render", "obstacle_threshold"}


def parse_experiment(path) -> ExperimentSpec:
    """Experiment files share the scenario `key = value` format; the `pair`
    key may repeat (`pair = x0,y0 : x1,y1`) or `pairs = N` auto-generates."""
    pairs: list[tuple[np.ndarray, np.ndarray]] = []
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ScenarioError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key == "pair":
            a, _, b = value.partition(":")
            pairs.append((np.array([float(t) for t in a.split(",")]),
                          np.array([float(t) for t in b.split(",")])))
        else:
            raw[key] = value
    if "map_path" not in raw or "planners" not in raw:
        raise ScenarioError(f"{path}: experiment needs map_path and planners")
    map_path = Path(raw["map_path"])
    if not map_path.is_absolute():
        map_path = (Path(path).parent / map_path).resolve()
    names = [p.strip() for p in raw["planners"].split(",") if p.strip()]
    unknown = [n for n in names if n not in pl.PLANNERS]
    if unknown:
        raise ScenarioError(f"{path}: unknown planners: {', '.join(unknown)}")
    overrides = {k: v for k, v in raw.items() if k not in _SPEC_KEYS}
    return ExperimentSpec(
        map_path=str(map_path),
        planners=names,
        pair_count=int(raw.get("pairs", 20)) if not pairs else len(pairs),
        pairs=pairs,
        repetitions=int(raw.get("repetitions", 20)),
        node_budget=int(raw.get("node_budget", 10000)),
        base_seed=int(raw.get("base_seed", 0)),
        out_dir=raw.get("out", "results"),
        render=raw.get("render", "first"),
        obstacle_threshold=float(raw.get("obstacle_threshold", 0.5)),
        scenario_overrides=overrides,
    )


# ---------------------------------------------------------------------------
# pair generation and feasibility

def _free_labels(environment: Environment) -> np.ndarray:
    labels, _ = ndimage.label(environment.occupancy == 0)
    return labels


def _cell_label(environment: Environment, q: np.ndarray, labels: np.ndarray) -> int:
    idx = np.floor((q - environment.lower) * environment.inv_cell).astype(int)
    idx = np.clip(idx, 0, np.asarray(labels.shape) - 1)
    return int(labels[tuple(idx)])


def pair_feasible(environment: Environment, start, goal,
                  labels: np.ndarray | None = None) -> bool:
    """Grid-connectivity oracle: both endpoints in the same free component."""
    labels = _free_labels(environment) if labels is None else labels
    a = _cell_label(environment, np.asarray(start, dtype=np.float64), labels)
    b = _cell_label(environment, np.asarray(goal, dtype=np.float64), labels)
    return a != 0 and a == b


def generate_pairs(environment: Environment, count: int, base_seed: int):
    """Feasible start/goal pairs at least half the map diagonal apart."""
    rng = substream(base_seed, "pairs")
    labels = _free_labels(environment)
    min_dist = _PAIR_MIN_DIAG_FRACTION * environment.diagonal()
    pairs = []
    attempts = 0
    while len(pairs) < count:
        attempts += 1
        if attempts > 10000 * count:
            raise ScenarioError("could not generate feasible pairs; map too constrained")
        a, _ = sample_free(environment, rng)
        b, _ = sample_free(environment, rng)
        if float(np.linalg.norm(a - b)) < min_dist:
            continue
        if pair_feasible(environment, a, b, labels):
            pairs.append((a, b))
    return pairs


# ---------------------------------------------------------------------------
# single-run execution

_METRIC_FIELDS = ("planner", "map", "pair", "repetition", "seed", "total_sampled",
                  "failed_connections", "points_in_cobs", "nodes",
                  "first_solution_node", "final_cost")

_ENV_CACHE: dict[tuple[str, float], Environment] = {}


def _cached_env(map_path: str, threshold: float) -> Environment:
    key = (map_path, threshold)
    if key not in _ENV_CACHE:
        _ENV_CACHE[key] = load_map(map_path, threshold)
    return _ENV_CACHE[key]


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return "NA" if not math.isfinite(value) else f"{value:.6g}"
    return str(value)


def run_id(planner: str, pair: int, rep: int) -> str:
    return f"{planner}-p{pair:03d}-r{rep:03d}"


def metrics_from_result(result: pl.PlannerResult, planner: str, map_name: str,
                        pair: int, rep: int) -> dict:
    ev = result.events
    nodes = ev.count(pl.EventKind.NODE_ADDED)
    fails = ev.count(pl.EventKind.FAILED_CONNECTION)
    cobs = ev.count(pl.EventKind.SAMPLE_IN_OBSTACLE)
    total = nodes + fails + cobs
    first = None
    seen = 0
    for e in ev:
        if e.kind == pl.EventKind.NODE_ADDED:
            seen += 1
        elif e.kind == pl.EventKind.SOLUTION_IMPROVED:
            first = seen
            break
    return {
        "planner": planner, "map": map_name, "pair": pair, "repetition": rep,
        "seed": result.rng_seed, "total_sampled": total,
        "failed_connections": None if planner == "prm" else fails,
        "points_in_cobs": cobs, "nodes": nodes,
        "first_solution_node": first,
        "final_cost": result.path.cost if result.path is not None else None,
    }


def trace_from_result(result: pl.PlannerResult, planner: str) -> str:
    cadence = PRM_TRACE_CADENCE if planner == "prm" else TRACE_CADENCE
    lines = ["nodes,total_sampled,failed_connections,points_in_cobs,best_cost"]
    nodes = fails = cobs = 0
    best = None
    for e in result.events:
        if e.kind == pl.EventKind.FAILED_CONNECTION:
            fails += 1
        elif e.kind == pl.EventKind.SAMPLE_IN_OBSTACLE:
            cobs += 1
        elif e.kind == pl.EventKind.SOLUTION_IMPROVED:
            best = e.best_cost
        else:
            nodes += 1
            if nodes % cadence == 0:
                total = nodes + fails + cobs
                lines.append(f"{nodes},{total},{fails},{cobs},{_fmt(best)}")
    return "\n".join(lines) + "\n"


def execute_run(task: dict) -> tuple[dict, str, str | None]:
    """One planner run (worker-side): returns (metrics row, trace CSV, svg)."""
    environment = _cached_env(task["map_path"], task["obstacle_threshold"])
    kwargs = dict(task["scenario_overrides"])
    for key in ("map_path", "start", "goal", "node_budget", "seed"):
        kwargs.pop(key, None)
    kwargs = {k: coerce_scenario_value(k, v) for k, v in kwargs.items()}
    epsilon = kwargs.pop("epsilon", 0.02 * environment.diagonal())
    scenario = Scenario(map_path=task["map_path"], start=np.asarray(task["start"]),
                        goal=np.asarray(task["goal"]), node_budget=task["node_budget"],
                        epsilon=epsilon, seed=task["seed"], **kwargs)
    try:
        result = pl.plan(scenario, environment, task["planner"])
    except Exception as exc:  # row marked failed, run continues
        row = {k: None for k in _METRIC_FIELDS}
        row.update(planner=task["planner"], map=task["map_name"], pair=task["pair"],
                   repetition=task["rep"], seed=task["seed"])
        return row, "error\n" + repr(exc) + "\n", None
    row = metrics_from_result(result, task["planner"], task["map_name"],
                              task["pair"], task["rep"])
    if row["failed_connections"] is not None:
        assert row["total_sampled"] == (row["nodes"] + row["failed_connections"]
                                        + row["points_in_cobs"])
    if result.capped:
        print(f"note: {run_id(task['planner'], task['pair'], task['rep'])} hit the "
              f"iteration cap with {row['nodes']} of {task['node_budget']} nodes",
              file=sys.stderr)
    svg = None
    if task["render"] and environment.dimension == 2:
        svg = render_svg(environment, result.forest, result.path,
                         result.extras.get("arms"))
    return row, trace_from_result(result, task["planner"]), svg


# ---------------------------------------------------------------------------
# experiment driver

def run_experiment(spec: ExperimentSpec, jobs: int = 1, out_dir=None) -> list[dict]:
    """Execute the full grid, write metrics.csv, traces/, renders/ and
    summary.csv under the output directory, and return the metric rows."""
    out = Path(out_dir if out_dir is not None else spec.out_dir)
    environment = _cached_env(spec.map_path, spec.obstacle_threshold)
    map_name = Path(spec.map_path).stem

    if spec.pairs:
        labels = _free_labels(environment)
        pairs = []
        for i, (a, b) in enumerate(spec.pairs):
            if pair_feasible(environment, a, b, labels):
                pairs.append((i, a, b))
            else:
                print(f"note: pair {i} {a.tolist()} -> {b.tolist()} is infeasible; skipped",
                      file=sys.stderr)
    else:
        pairs = [(i, a, b) for i, (a, b) in
                 enumerate(generate_pairs(environment, spec.pair_count, spec.base_seed))]
    if not pairs:
        raise ScenarioError("no feasible start/goal pair to run")

    tasks = []
    for planner in spec.planners:
        for pair_idx, a, b in pairs:
            for rep in range(spec.repetitions):
                seed = derive_seed(spec.base_seed, planner, pair_idx, rep)
                tasks.append({
                    "map_path": spec.map_path, "map_name": map_name,
                    "obstacle_threshold": spec.obstacle_threshold,
                    "planner": planner, "pair": pair_idx, "rep": rep,
                    "start": a, "goal": b, "seed": seed,
                    "node_budget": spec.node_budget,
                    "scenario_overrides": spec.scenario_overrides,
                    "render": spec.render == "all" or (spec.render == "first" and rep == 0),
                })
    seeds = [t["seed"] for t in tasks]
    if len(set(seeds)) != len(seeds):
        raise ScenarioError("derived run seeds collide; change base_seed")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(execute_run, tasks, chunksize=1))
    else:
        results = [execute_run(t) for t in tasks]

    (out / "traces").mkdir(parents=True, exist_ok=True)
    rows = []
    any_svg = any(svg is not None for _, _, svg in results)
    if any_svg:
        (out / "renders").mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(_METRIC_FIELDS) + "\n")
        for task, (row, trace, svg) in zip(tasks, results):
            fh.write(",".join(_fmt(row[k]) for k in _METRIC_FIELDS) + "\n")
            rows.append(row)
            rid = run_id(task["planner"], task["pair"], task["rep"])
            (out / "traces" / f"{rid}.csv").write_text(trace, encoding="utf-8")
            if svg is not None:
                (out / "renders" / f"{rid}.svg").write_text(svg, encoding="utf-8")
    write_summary(rows, out / "summary.csv")
    return rows


# ---------------------------------------------------------------------------
# summaries

_SUMMARY_METRICS = ("total_sampled", "failed_connections", "points_in_cobs",
                    "first_solution_node", "final_cost")


def two_significant(x: float) -> str:
    """Plain-decimal formatting at two significant figures (4 -> '4.0',
    0.09 -> '0.090', 103 -> '100')."""
    if x == 0:
        return "0.0"
    exp = math.floor(math.log10(abs(x)))
    r = round(x, 1 - exp)
    if r != 0:
        exp = math.floor(math.log10(abs(r)))
    decimals = max(0, 1 - exp)
    return f"{r:.{decimals}f}"


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std())  # population std, matching the mu +/- 2 sigma convention
    # independent one-pass (Welford) recomputation guards the vectorized path
    w_mean, w_m2 = 0.0, 0.0
    for k, v in enumerate(values, 1):
        delta = v - w_mean
        w_mean += delta / k
        w_m2 += delta * (v - w_mean)
    w_std = math.sqrt(w_m2 / len(values))
    if not (abs(w_mean - mean) <= 1e-9 * max(1.0, abs(mean))
            and abs(w_std - std) <= 1e-9 * max(1.0, std)):
        raise AssertionError("summary statistics disagree with one-pass oracle")
    return mean, std


def summarize(rows: list[dict]) -> list[dict]:
    """Per (map, planner) mean +/- 2 sigma cells at two significant figures."""
    if not rows:
        raise ScenarioError("cannot summarize an empty metrics table")
    groups: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["map"], row["planner"]), []).append(row)
    out = []
    for (map_name, planner) in sorted(groups):
        cell = {"map": map_name, "planner": planner, "runs": len(groups[(map_name, planner)])}
        for metric in _SUMMARY_METRICS:
            values = [r[metric] for r in groups[(map_name, planner)]
                      if r[metric] is not None]
            if not values:
                cell[metric] = "NA"
                continue
            mean, std = _mean_std([float(v) for v in values])
            cell[metric] = f"{two_significant(mean)}±{two_significant(2 * std)}"
        out.append(cell)
    return out


def write_summary(rows: list[dict], path) -> None:
    cells = summarize(rows)
    cols = ["map", "planner", "runs", *_SUMMARY_METRICS]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for cell in cells:
            fh.write(",".join(str(cell[c]) for c in cols) + "\n")


def read_metrics_csv(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        vals = line.split(",")
        row = dict(zip(header, vals))
        for key in ("pair", "repetition", "seed", "total_sampled", "failed_connections",
                    "points_in_cobs", "nodes", "first_solution_node"):
            row[key] = None if row.get(key) in (None, "NA") else int(row[key])
        row["final_cost"] = None if row.get("final_cost") == "NA" else float(row["final_cost"])
        rows.append(row)
    return rows
