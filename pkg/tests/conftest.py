from __future__ import annotations

import numpy as np
import pytest

from rrdt.env import Environment


def ascii_env(art: str) -> Environment:
    """Build a 2-d world from ASCII art ('#' obstacle, '.' free).

    Rows are y (top line is y = 0), columns are x; cell size 1.
    """
    lines = [ln for ln in art.strip().splitlines()]
    height = len(lines)
    width = len(lines[0])
    assert all(len(ln) == width for ln in lines), "ragged ascii map"
    occ = np.zeros((width, height), dtype=np.uint8)
    for y, line in enumerate(lines):
        for x, ch in enumerate(line):
            if ch == "#":
                occ[x, y] = 1
    return Environment(occ)


@pytest.fixture
def empty10() -> Environment:
    return Environment(np.zeros((10, 10), dtype=np.uint8))


@pytest.fixture
def empty100() -> Environment:
    return Environment(np.zeros((100, 100), dtype=np.uint8))


@pytest.fixture
def wall_map() -> Environment:
    """10x10 with a full wall column covering x in [4, 5)."""
    occ = np.zeros((10, 10), dtype=np.uint8)
    occ[4, :] = 1
    return Environment(occ)
