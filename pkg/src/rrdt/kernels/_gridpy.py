"""Pure-Python (numpy) occupancy-grid collision kernels.

Fallback lane for environments without a C compiler. Arithmetic mirrors the
compiled lane operation-for-operation (the extension is built with FMA
contraction disabled), so both lanes return identical booleans on identical
inputs.
"""

from __future__ import annotations

import math

import numpy as np


def _cells(occ, lo, hi, inv, pts):
    rel = (pts - lo) * inv
    idx = np.floor(rel).astype(np.int64)
    shape = np.asarray(occ.shape, dtype=np.int64)
    inb = ((pts >= lo).all(axis=1) & (pts < hi).all(axis=1)
           & (idx >= 0).all(axis=1) & (idx < shape).all(axis=1))
    return idx, inb


def point_free(occ, lo, hi, inv, p):
    idx, inb = _cells(occ, lo, hi, inv, p[None, :])
    if not inb[0]:
        return False
    return bool(occ[tuple(idx[0])] == 0)


def points_free(occ, lo, hi, inv, pts):
    idx, inb = _cells(occ, lo, hi, inv, pts)
    out = np.zeros(len(pts), dtype=np.bool_)
    if inb.any():
        strides = np.asarray(occ.strides, dtype=np.int64)  # u8: bytes == elements
        flat = (idx[inb] * strides).sum(axis=1)
        out[inb] = occ.reshape(-1)[flat] == 0
    return out


def segment_free(occ, lo, hi, inv, a, b, resolution):
    d = occ.ndim
    swap = False
    for ax in range(d):
        if a[ax] < b[ax]:
            break
        if a[ax] > b[ax]:
            swap = True
            break
    if swap:
        a, b = b, a
    acc = 0.0
    for ax in range(d):
        diff = float(b[ax]) - float(a[ax])
        acc += diff * diff
    m = int(math.ceil(math.sqrt(acc) / resolution))
    if m == 0:
        return point_free(occ, lo, hi, inv, a)
    ts = np.arange(m + 1, dtype=np.float64) / float(m)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    return bool(points_free(occ, lo, hi, inv, pts).all())


# ---------------------------------------------------------------------------
# nearest-neighbor kernels

# scipy's metric can differ from ours in the last ulp, so scipy queries are
# widened by this factor and then re-filtered with our own squared distances.
_SLACK = 1.0 + 1e-12


def rows_d2(pts, q):
    """Squared distances row-by-row, accumulated in ascending axis order so
    the values match the compiled kernels bit-for-bit."""
    diff = pts - q
    acc = diff[:, 0] * diff[:, 0]
    for ax in range(1, diff.shape[1]):
        acc = acc + diff[:, ax] * diff[:, ax]
    return acc


_d2 = rows_d2


def brute_nearest(pts, q):
    """(squared distance, index) of the nearest row; ties -> lowest index."""
    if len(pts) == 0:
        raise ValueError("empty point set")
    d2 = _d2(pts, q)
    i = int(np.argmin(d2))  # first occurrence == lowest index
    return float(d2[i]), i


def brute_ball(pts, q, r2):
    """Indices of rows with squared distance <= r2, ascending."""
    return np.nonzero(_d2(pts, q) <= r2)[0].astype(np.int64)


class KDIndex:
    """scipy-backed twin of the compiled static kd-tree."""

    def __init__(self, pts):
        from scipy.spatial import cKDTree
        arr = np.ascontiguousarray(pts, dtype=np.float64)
        if arr.ndim != 2 or len(arr) == 0:
            raise ValueError("KDIndex needs a nonempty (n, d) array")
        self._pts = arr.copy()
        self._kd = cKDTree(self._pts)

    def __len__(self):
        return len(self._pts)

    def nearest(self, q):
        dist, idx = self._kd.query(q)
        ids = self._kd.query_ball_point(q, float(dist) * _SLACK)
        if not ids:
            i = int(idx)
            return float(_d2(self._pts[i:i + 1], q)[0]), i
        ids = np.asarray(ids, dtype=np.int64)
        d2 = _d2(self._pts[ids], q)
        best = d2.min()
        return float(best), int(ids[d2 == best].min())

    def ball(self, q, r):
        ids = self._kd.query_ball_point(q, r * _SLACK)
        if not ids:
            return np.empty(0, dtype=np.int64)
        ids = np.asarray(sorted(ids), dtype=np.int64)
        return ids[_d2(self._pts[ids], q) <= r * r]


def propagate_costs(cost, edge, first_child, next_sibling, start):
    """Recompute cost = parent cost + edge over the subtree below start."""
    stack = [start]
    while stack:
        v = stack.pop()
        base = cost[v]
        c = int(first_child[v])
        while c >= 0:
            cost[c] = base + edge[c]
            stack.append(c)
            c = int(next_sibling[c])


def segments_free(occ, lo, hi, inv, starts, q, resolution):
    """Per-row segment checks from each start to the shared endpoint q."""
    out = np.empty(len(starts), dtype=np.bool_)
    for k in range(len(starts)):
        out[k] = segment_free(occ, lo, hi, inv, starts[k], q, resolution)
    return out
