"""Command-line interface: plan / bench / summarize.

Exit codes: 0 success, 2 infeasible or invalid input, 1 internal error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import bench as bn
from . import planners as pl
from .env import MapLoadError, ScenarioError, load_map, load_scenario
from .forest import ForestError

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INFEASIBLE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrdt",
                                     description="Disjointed-tree motion planner and benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run one planner on a scenario file")
    p.add_argument("scenario", help="scenario file (key = value lines)")
    p.add_argument("--planner", choices=sorted(pl.PLANNERS), default=None,
                   help="override the scenario's planner")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--svg", default=None, help="write an SVG render of the final forest")
    p.add_argument("--dump-graph", default=None, help="write the forest graph dump")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="override any scenario key (repeatable)")

    b = sub.add_parser("bench", help="run a full experiment file")
    b.add_argument("experiment", help="experiment file (key = value lines)")
    b.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    b.add_argument("--out", default=None, help="output directory (default from file)")

    s = sub.add_parser("summarize", help="summarize a metrics.csv")
    s.add_argument("metrics", help="metrics.csv produced by bench")
    return parser


def _cmd_plan(args) -> int:
    overrides = {}
    for item in args.override:
        if "=" not in item:
            raise ScenarioError(f"--override needs KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.planner is not None:
        overrides["planner"] = args.planner
    scenario = load_scenario(args.scenario, overrides)
    environment = load_map(scenario.map_path)

    if not bn.pair_feasible(environment, scenario.start, scenario.goal):
        print("infeasible scenario: no grid path between start and goal", file=sys.stderr)
        return EXIT_INFEASIBLE

    t0 = time.perf_counter()
    result = pl.plan(scenario, environment)
    elapsed = time.perf_counter() - t0

    ev = result.events
    k = pl.EventKind
    nodes = ev.count(k.NODE_ADDED)
    fails = ev.count(k.FAILED_CONNECTION)
    cobs = ev.count(k.SAMPLE_IN_OBSTACLE)
    print(f"planner      : {scenario.planner}")
    print(f"nodes        : {nodes}")
    print(f"failed conn. : {fails}")
    print(f"points C_obs : {cobs}")
    print(f"total sampled: {nodes + fails + cobs}")
    print(f"iterations   : {result.iterations}{'  (iteration cap hit)' if result.capped else ''}")
    print(f"time         : {elapsed:.2f}s")
    if result.path is not None:
        print(f"solution cost: {result.path.cost:.6g} ({len(result.path.waypoints)} waypoints)")
    else:
        print("solution cost: none found")

    if args.svg:
        if environment.dimension == 2:
            svg = bn.render_svg(environment, result.forest, result.path,
                                result.extras.get("arms"))
            Path(args.svg).write_text(svg, encoding="utf-8")
            print(f"svg          : {args.svg}")
        else:
            print("svg          : skipped (rendering needs a 2-d environment)")
    if args.dump_graph:
        if result.forest is not None:
            Path(args.dump_graph).write_text(result.forest.dump_graph(), encoding="utf-8")
            print(f"graph dump   : {args.dump_graph}")
        else:
            print("graph dump   : skipped (planner keeps no forest)")
    return EXIT_OK


def _cmd_bench(args) -> int:
    spec = bn.parse_experiment(args.experiment)
    rows = bn.run_experiment(spec, jobs=max(1, args.jobs), out_dir=args.out)
    out = Path(args.out if args.out is not None else spec.out_dir)
    print(f"{len(rows)} runs -> {out / 'metrics.csv'}")
    return EXIT_OK


def _cmd_summarize(args) -> int:
    rows = bn.read_metrics_csv(args.metrics)
    cells = bn.summarize(rows)
    cols = ["map", "planner", "runs", "total_sampled", "failed_connections",
            "points_in_cobs", "first_solution_node", "final_cost"]
    widths = {c: max(len(c), *(len(str(cell[c])) for cell in cells)) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for cell in cells:
        print("  ".join(str(cell[c]).ljust(widths[c]) for c in cols))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "plan":
            return _cmd_plan(args)
        if args.command == "bench":
            return _cmd_bench(args)
        return _cmd_summarize(args)
    except (ScenarioError, MapLoadError, ForestError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # internal failure
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
