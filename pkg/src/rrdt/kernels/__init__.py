"""Grid collision kernels with a compiled core and a pure-Python fallback.

The compiled lane (`_gridcore`, Cython) is preferred when importable; the
numpy lane (`_gridpy`) is semantically identical and is selected when the
extension is missing or when ``RRDT_KERNELS=python`` is set. Set
``RRDT_KERNELS=compiled`` to fail loudly instead of falling back.
"""

from __future__ import annotations

import os

_requested = os.environ.get("RRDT_KERNELS", "auto").lower()
if _requested not in ("auto", "compiled", "python"):
    raise ValueError(f"RRDT_KERNELS must be auto|compiled|python, got {_requested!r}")

if _requested == "python":
    from . import _gridpy as _impl
    IMPLEMENTATION = "python"
else:
    try:
        from . import _gridcore as _impl  # type: ignore[attr-defined]
        IMPLEMENTATION = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import _gridpy as _impl
        IMPLEMENTATION = "python"

from ._gridpy import rows_d2  # lane-independent numpy helper

point_free = _impl.point_free
points_free = _impl.points_free
segment_free = _impl.segment_free
segments_free = _impl.segments_free
brute_nearest = _impl.brute_nearest
brute_ball = _impl.brute_ball
KDIndex = _impl.KDIndex
propagate_costs = _impl.propagate_costs

__all__ = ["IMPLEMENTATION", "point_free", "points_free", "segment_free",
           "segments_free", "brute_nearest", "brute_ball", "KDIndex",
           "propagate_costs", "rows_d2"]
