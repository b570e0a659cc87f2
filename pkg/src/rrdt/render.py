"""Deterministic SVG rendering of 2-d worlds, forests, paths and arms.

Obstacle cells are merged into per-column runs, tree edges are polylines
colored by canonical tree id, the solution path is highlighted, and arm
positions appear as the yellow circles of the walker motif. Identical inputs
produce identical bytes.
"""

from __future__ import annotations

import numpy as np

from .env import Environment
from .forest import Forest, Path

_PALETTE = ("#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
            "#bcbd22", "#17becf", "#aec7e8", "#98df8a", "#c5b0d5", "#dbdb8d")
_OBSTACLE = "#3a3a3a"
_PATH = "#d62728"
_ARM_FILL = "#ffd700"


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def render_svg(environment: Environment, forest: Forest | None = None,
               path: Path | None = None, arms=None) -> str:
    """SVG document for a 2-d environment snapshot.

    Raises ValueError for non-2-d environments (callers skip with a notice).
    """
    if environment.dimension != 2:
        raise ValueError(f"SVG rendering needs a 2-d environment, got {environment.dimension}-d")
    lo, hi = environment.lower, environment.upper
    w, h = hi - lo
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(lo[0])} {_fmt(lo[1])} '
           f'{_fmt(w)} {_fmt(h)}" width="800" height="{_fmt(800 * h / w)}">',
           f'<rect x="{_fmt(lo[0])}" y="{_fmt(lo[1])}" width="{_fmt(w)}" height="{_fmt(h)}" '
           f'fill="#ffffff"/>']

    occ = environment.occupancy
    cs = environment.cell_size
    for x in range(occ.shape[0]):
        col = occ[x]
        y = 0
        while y < len(col):
            if col[y]:
                y0 = y
                while y < len(col) and col[y]:
                    y += 1
                out.append(f'<rect x="{_fmt(lo[0] + x * cs[0])}" y="{_fmt(lo[1] + y0 * cs[1])}" '
                           f'width="{_fmt(cs[0])}" height="{_fmt((y - y0) * cs[1])}" '
                           f'fill="{_OBSTACLE}"/>')
            else:
                y += 1

    if forest is not None and len(forest):
        pts = forest.configs
        by_tree: dict[int, list[str]] = {}
        for node in range(len(forest)):
            par = forest.parent(node)
            if par is None:
                continue
            seg = (f'M{_fmt(pts[par][0])} {_fmt(pts[par][1])} '
                   f'L{_fmt(pts[node][0])} {_fmt(pts[node][1])}')
            by_tree.setdefault(forest.tree_of(node), []).append(seg)
        for tree_id in sorted(by_tree):
            color = _PALETTE[tree_id % len(_PALETTE)]
            out.append(f'<path d="{" ".join(by_tree[tree_id])}" stroke="{color}" '
                       f'stroke-width="0.6" fill="none" opacity="0.8"/>')

    if path is not None and len(path.waypoints) > 0:
        coords = " ".join(f"{_fmt(p[0])},{_fmt(p[1])}" for p in path.waypoints)
        out.append(f'<polyline points="{coords}" stroke="{_PATH}" stroke-width="2.5" '
                   f'fill="none"/>')

    for arm in (arms or []):
        pos = arm.sampler.position
        out.append(f'<circle cx="{_fmt(pos[0])}" cy="{_fmt(pos[1])}" r="4" '
                   f'fill="{_ARM_FILL}" stroke="#000000" stroke-width="0.8"/>')

    out.append("</svg>")
    return "\n".join(out) + "\n"
