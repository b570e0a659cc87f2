"""Benchmark the compiled kernels against the pure-Python lane.

Micro-benchmarks compare both lanes in-process (both modules are importable
side by side); the end-to-end planner comparison re-executes this script in a
subprocess with RRDT_KERNELS forced, because the lane is bound at import.

Usage:
    python benchmarks/kernel_bench.py            # full comparison
    python benchmarks/kernel_bench.py --planner-only   # used by the subprocess
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np


def micro():
    from rrdt.kernels import _gridpy
    try:
        from rrdt.kernels import _gridcore
    except ImportError:
        print("compiled lane unavailable; nothing to compare")
        return

    from rrdt import maps
    from rrdt.env import load_map
    env = load_map(maps.bundled_map("maze"))
    occ, lo, hi, inv = env.occupancy, env.lower, env.upper, env.inv_cell
    rng = np.random.default_rng(0)

    a = np.array([20.5, 20.5])
    b = np.array([250.0, 310.0])
    pts = rng.uniform(0, 400, size=(1000, 2))
    seg_c = timeit.timeit(lambda: _gridcore.segment_free(occ, lo, hi, inv, a, b, 0.5), number=5000) / 5000
    seg_p = timeit.timeit(lambda: _gridpy.segment_free(occ, lo, hi, inv, a, b, 0.5), number=500) / 500
    pf_c = timeit.timeit(lambda: _gridcore.points_free(occ, lo, hi, inv, pts), number=2000) / 2000
    pf_p = timeit.timeit(lambda: _gridpy.points_free(occ, lo, hi, inv, pts), number=500) / 500

    cloud = rng.uniform(0, 400, size=(20000, 2))
    kd_c = _gridcore.KDIndex(cloud)
    kd_p = _gridpy.KDIndex(cloud)
    q = np.array([200.0, 201.0])
    nn_c = timeit.timeit(lambda: kd_c.nearest(q), number=20000) / 20000
    nn_p = timeit.timeit(lambda: kd_p.nearest(q), number=5000) / 5000
    ball_c = timeit.timeit(lambda: kd_c.ball(q, 8.0), number=20000) / 20000
    ball_p = timeit.timeit(lambda: kd_p.ball(q, 8.0), number=5000) / 5000

    print(f"{'kernel':<28}{'compiled':>12}{'python':>12}{'speedup':>9}")
    for name, c, p in (
        ("segment_free (741 pts)", seg_c, seg_p),
        ("points_free (1000 pts)", pf_c, pf_p),
        ("kd nearest (20k pts)", nn_c, nn_p),
        ("kd ball r=8 (20k pts)", ball_c, ball_p),
    ):
        print(f"{name:<28}{c * 1e6:>10.2f}us{p * 1e6:>10.2f}us{p / c:>8.1f}x")


def planner_once():
    from rrdt import kernels, maps, planners
    from rrdt.env import load_map, load_scenario
    scenario = load_scenario(maps.bundled_scenario("maze"))
    scenario.seed = 7
    scenario.node_budget = 4000
    env = load_map(scenario.map_path)
    t0 = time.perf_counter()
    result = planners.plan(scenario, env, "rrt")
    elapsed = time.perf_counter() - t0
    print(f"lane={kernels.IMPLEMENTATION:<9} rrt maze N=4000: {elapsed:6.2f}s "
          f"({result.nodes_added} nodes, solved={result.path is not None})")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--planner-only", action="store_true")
    args = parser.parse_args()
    if args.planner_only:
        planner_once()
        return
    micro()
    print()
    for lane in ("compiled", "python"):
        env = dict(os.environ, RRDT_KERNELS=lane)
        subprocess.run([sys.executable, __file__, "--planner-only"],
                       env=env, check=True)


if __name__ == "__main__":
    main()
