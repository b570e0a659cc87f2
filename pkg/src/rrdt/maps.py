"""Bundled desk-scale worlds: Room (sparse walls), Maze (corridor grid) and
Clutter (seeded random scatter), 400x400 cells, plus their scenario files.

The three are reconstructions ordered by decreasing expansiveness; builders
are fully deterministic so the shipped PGMs can be regenerated bit-for-bit.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
from scipy import ndimage

from .env import save_pgm
from .rng import substream

MAP_NAMES = ("room", "maze", "clutter")

_SIZE = 400
_BORDER = 6


def build_room(size: int = _SIZE) -> np.ndarray:
    """Floor plan with a few partition walls and wide doorways."""
    occ = np.zeros((size, size), dtype=np.uint8)
    b = _BORDER
    occ[:b, :] = occ[-b:, :] = 1
    occ[:, :b] = occ[:, -b:] = 1

    def hwall(y0, gaps):
        occ[b:size - b, y0:y0 + b] = 1
        for x0, x1 in gaps:
            occ[x0:x1, y0:y0 + b] = 0

    def vwall(x0, y_lo, y_hi, gaps):
        occ[x0:x0 + b, y_lo:y_hi] = 1
        for g0, g1 in gaps:
            occ[x0:x0 + b, g0:g1] = 0

    hwall(130, [(60, 120), (280, 340)])
    hwall(264, [(40, 100), (200, 260)])
    vwall(197, b, 130, [(40, 90)])
    vwall(120, 270, size - b, [(300, 350)])
    vwall(270, 136, 264, [(170, 220)])
    return occ


def build_maze(size: int = _SIZE, cells: int = 13, wall: int = 9,
               seed: int = 7, extra_loops: int = 14) -> np.ndarray:
    """Corridor grid carved by a seeded recursive backtracker, plus a few
    extra openings so the corridor graph has loops (not a bare tree)."""
    cs = size // cells
    occ = np.ones((size, size), dtype=np.uint8)
    rng = substream(seed, "maze")
    for cx in range(cells):
        for cy in range(cells):
            occ[cx * cs + wall:(cx + 1) * cs, cy * cs + wall:(cy + 1) * cs] = 0

    def carve(ax, ay, bx, by):
        if ax != bx:  # open the vertical strip between the two cells
            x0 = max(ax, bx) * cs
            occ[x0:x0 + wall, ay * cs + wall:(ay + 1) * cs] = 0
        else:
            y0 = max(ay, by) * cs
            occ[ax * cs + wall:(ax + 1) * cs, y0:y0 + wall] = 0

    carved = set()
    visited = np.zeros((cells, cells), dtype=bool)
    visited[0, 0] = True
    stack = [(0, 0)]
    while stack:
        cx, cy = stack[-1]
        options = []
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = cx + dx, cy + dy
            if 0 <= nx < cells and 0 <= ny < cells and not visited[nx, ny]:
                options.append((nx, ny))
        if not options:
            stack.pop()
            continue
        nx, ny = options[int(rng.integers(len(options)))]
        visited[nx, ny] = True
        carve(cx, cy, nx, ny)
        carved.add(((cx, cy), (nx, ny)))
        carved.add(((nx, ny), (cx, cy)))
        stack.append((nx, ny))

    closed = [((x, y), (x + 1, y)) for x in range(cells - 1) for y in range(cells)
              if ((x, y), (x + 1, y)) not in carved]
    closed += [((x, y), (x, y + 1)) for x in range(cells) for y in range(cells - 1)
               if ((x, y), (x, y + 1)) not in carved]
    order = rng.permutation(len(closed))
    for k in order[:extra_loops]:
        (ax, ay), (bx, by) = closed[int(k)]
        carve(ax, ay, bx, by)

    occ[-wall:, :] = 1
    occ[:, -wall:] = 1
    return occ


def build_clutter(size: int = _SIZE, target: float = 0.45,
                  seed: int = 11) -> np.ndarray:
    """Random axis-aligned blocks until the target occupancy is reached."""
    occ = np.zeros((size, size), dtype=np.uint8)
    rng = substream(seed, "clutter")
    total = occ.size
    while occ.sum() < target * total:
        w, h = (int(v) for v in rng.integers(6, 19, size=2))
        x = int(rng.integers(0, size - w))
        y = int(rng.integers(0, size - h))
        occ[x:x + w, y:y + h] = 1
    return occ


BUILDERS = {"room": build_room, "maze": build_maze, "clutter": build_clutter}


def largest_free_component(occ: np.ndarray) -> np.ndarray:
    """Boolean mask of the biggest 4-connected free region."""
    labels, count = ndimage.label(occ == 0)
    if count == 0:
        raise ValueError("map has no free cell")
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, count + 1))
    return labels == (1 + int(np.argmax(sizes)))


def pick_endpoint(occ: np.ndarray, near_xy: tuple[float, float]) -> tuple[float, float]:
    """Free cell center closest to a desired location, restricted to the
    largest free component so bundled start/goal pairs are always feasible."""
    mask = largest_free_component(occ)
    xs, ys = np.nonzero(mask)
    centers = np.stack([xs + 0.5, ys + 0.5], axis=1)
    d2 = ((centers - np.asarray(near_xy)) ** 2).sum(axis=1)
    best = int(np.argmin(d2))
    return float(centers[best, 0]), float(centers[best, 1])


_SCENARIO_TEMPLATE = """\
# bundled desk-scale scenario: {name}
map_path = {name}.pgm
start = {sx}, {sy}
goal = {gx}, {gy}
node_budget = 10000
epsilon = 8.0
eta = 0.02
num_arms = 16
seed = 0
collision_resolution = 0.5
"""


def regenerate(out_dir) -> list[Path]:
    """Write the three PGMs and scenario files (used by tools/gen_maps.py)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, builder in BUILDERS.items():
        occ = builder()
        pgm = out / f"{name}.pgm"
        save_pgm(occ, pgm)
        sx, sy = pick_endpoint(occ, (15.0, 15.0))
        gx, gy = pick_endpoint(occ, (385.0, 385.0))
        scn = out / f"{name}.scenario"
        scn.write_text(_SCENARIO_TEMPLATE.format(name=name, sx=sx, sy=sy,
                                                 gx=gx, gy=gy),
                       encoding="utf-8")
        written += [pgm, scn]
    return written


def bundled_path(filename: str) -> Path:
    path = Path(str(resources.files("rrdt") / "maps" / filename))
    if not path.exists():
        raise FileNotFoundError(f"bundled file missing: {filename}")
    return path


def bundled_map(name: str) -> Path:
    return bundled_path(f"{name}.pgm")


def bundled_scenario(name: str) -> Path:
    return bundled_path(f"{name}.scenario")
