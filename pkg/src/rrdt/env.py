"""Configuration space: bounded occupancy-grid world, collision queries,
uniform free-space sampling, and map/scenario file loading.

Conventions
-----------
* A configuration is a float64 ndarray of length d (d >= 2), finite entries.
* Bounds are half-open per axis: a point exactly on the upper bound is out.
* ``occupancy[i0, ..., id-1] == 1`` marks an obstacle cell; axis 0 is x, so
  raster images are transposed on load (pixel (x, y) -> cell (x, y)).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import kernels

SAMPLE_REJECTION_CAP = 10**6
_SAMPLE_BATCH = 16


class MapLoadError(ValueError):
    """Unreadable, unsupported, or degenerate map file."""


class ScenarioError(ValueError):
    """Scenario file violates the scenario contract."""


def as_config(value, dim: int | None = None) -> np.ndarray:
    q = np.ascontiguousarray(value, dtype=np.float64)
    if q.ndim != 1 or q.size < 2:
        raise ValueError(f"configuration must be a 1-d vector of length >= 2, got shape {q.shape}")
    if not np.isfinite(q).all():
        raise ValueError("configuration has non-finite coordinates")
    if dim is not None and q.size != dim:
        raise ValueError(f"configuration dimension {q.size} != environment dimension {dim}")
    return q


class Environment:
    """Immutable bounded world backed by a boolean occupancy grid."""

    def __init__(self, occupancy: np.ndarray, lower=None, cell_size=None,
                 obstacle_threshold: float = 0.5):
        occ = np.ascontiguousarray(occupancy, dtype=np.uint8)
        if occ.ndim < 2:
            raise MapLoadError("occupancy grid must have dimension >= 2")
        if min(occ.shape) < 1:
            raise MapLoadError("occupancy grid has an empty axis")
        d = occ.ndim
        lo = np.zeros(d) if lower is None else np.asarray(lower, dtype=np.float64)
        cs = np.ones(d) if cell_size is None else np.asarray(cell_size, dtype=np.float64)
        if cs.shape != (d,) or (cs <= 0).any():
            raise MapLoadError("cell size must be positive on every axis")
        if lo.shape != (d,):
            raise MapLoadError("lower bound has wrong dimension")
        self.occupancy = occ
        self.occupancy.flags.writeable = False
        self.lower = lo
        self.cell_size = cs
        self.upper = lo + np.asarray(occ.shape, dtype=np.float64) * cs
        self.inv_cell = 1.0 / cs
        self.obstacle_threshold = float(obstacle_threshold)
        self.dimension = d
        self.free_cells = int(occ.size - int(occ.sum()))
        self.free_volume = self.free_cells * float(np.prod(cs))

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.lower

    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    # unchecked fast paths for planner inner loops; arguments must already be
    # contiguous float64 vectors of the right dimension
    def point_ok(self, q) -> bool:
        return kernels.point_free(self.occupancy, self.lower, self.upper,
                                  self.inv_cell, q)

    def seg_ok(self, a, b, resolution: float) -> bool:
        return kernels.segment_free(self.occupancy, self.lower, self.upper,
                                    self.inv_cell, a, b, resolution)

    def segs_ok(self, starts, q, resolution: float):
        return kernels.segments_free(self.occupancy, self.lower, self.upper,
                                     self.inv_cell, starts, q, resolution)

    def __repr__(self):
        return (f"Environment(shape={self.occupancy.shape}, "
                f"free={self.free_cells}/{self.occupancy.size})")


# ---------------------------------------------------------------------------
# collision queries

def is_free(env: Environment, q) -> bool:
    q = as_config(q, env.dimension)
    return kernels.point_free(env.occupancy, env.lower, env.upper, env.inv_cell, q)


def segment_free(env: Environment, a, b, resolution: float) -> bool:
    a = as_config(a, env.dimension)
    b = as_config(b, env.dimension)
    if not resolution > 0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    return kernels.segment_free(env.occupancy, env.lower, env.upper,
                                env.inv_cell, a, b, float(resolution))


def sample_free(env: Environment, rng) -> tuple[np.ndarray, int]:
    """Uniform sample over the free space by rejection from the bounds.

    Returns (configuration, number of rejected in-obstacle draws); rejected
    draws are exactly the "points in C_obs" tally kept by the planners.
    """
    rejected = 0
    lo, extent = env.lower, env.extent
    while True:
        pts = lo + rng.random((_SAMPLE_BATCH, env.dimension)) * extent
        mask = kernels.points_free(env.occupancy, env.lower, env.upper,
                                   env.inv_cell, pts)
        hit = int(np.argmax(mask)) if mask.any() else -1
        if hit >= 0:
            return np.ascontiguousarray(pts[hit]), rejected + hit
        rejected += _SAMPLE_BATCH
        if rejected > SAMPLE_REJECTION_CAP:
            raise RuntimeError(f"no free sample after {rejected} draws; map may have no free cell")


# ---------------------------------------------------------------------------
# map files

def load_map(path, obstacle_threshold: float = 0.5) -> Environment:
    """Load a raster (PGM/PNG, cells whose normalized intensity is below the
    threshold are obstacles) or an n-d binary grid (``.grid``)."""
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix == ".pgm":
            intensity = _read_pgm(path)
        elif suffix == ".png":
            intensity = _read_png(path)
        elif suffix == ".grid":
            return _finish(_read_grid(path), obstacle_threshold)
        else:
            raise MapLoadError(f"unsupported map format: {path.name}")
    except OSError as exc:
        raise MapLoadError(f"cannot read map {path}: {exc}") from exc
    occ = (intensity < obstacle_threshold).astype(np.uint8)
    occ = np.ascontiguousarray(occ.T)  # (rows, cols) -> (x, y)
    return _finish(occ, obstacle_threshold)


def _finish(occ: np.ndarray, threshold: float) -> Environment:
    env = Environment(occ, obstacle_threshold=threshold)
    if env.free_cells == 0:
        raise MapLoadError("map has no free cell")
    return env


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if data[:2] not in (b"P2", b"P5"):
        raise MapLoadError(f"{path.name}: not a P2/P5 PGM")
    binary = data[:2] == b"P5"

    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MapLoadError(f"{path.name}: truncated PGM header")
        tokens.append(data[start:pos])
    width, height, maxval = (int(t) for t in tokens)
    if maxval <= 0 or maxval > 65535:
        raise MapLoadError(f"{path.name}: bad maxval {maxval}")

    if binary:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.uint8
        count = width * height
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        if raw.size != count:
            raise MapLoadError(f"{path.name}: truncated pixel data")
    else:
        raw = np.array(data[pos:].split(), dtype=np.int64)
        if raw.size != width * height:
            raise MapLoadError(f"{path.name}: expected {width * height} pixels, got {raw.size}")
    img = raw.reshape(height, width).astype(np.float64) / maxval
    return img


def _read_png(path: Path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise MapLoadError("PNG maps require pillow") from exc
    try:
        with Image.open(path) as im:
            gray = im.convert("L")
            img = np.asarray(gray, dtype=np.float64) / 255.0
    except Exception as exc:
        raise MapLoadError(f"{path.name}: not a readable PNG ({exc})") from exc
    return img


_GRID_MAGIC_NOTE = "little-endian u32 dim, u32 counts per axis, then row-major 0/1 bytes"


def _read_grid(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < 4:
        raise MapLoadError(f"{path.name}: truncated grid header ({_GRID_MAGIC_NOTE})")
    (dim,) = struct.unpack_from("<I", data, 0)
    if dim < 2 or dim > 16:
        raise MapLoadError(f"{path.name}: grid dimension {dim} out of range [2, 16]")
    header = 4 + 4 * dim
    if len(data) < header:
        raise MapLoadError(f"{path.name}: truncated grid header")
    counts = struct.unpack_from(f"<{dim}I", data, 4)
    total = int(np.prod(counts))
    if len(data) != header + total:
        raise MapLoadError(f"{path.name}: expected {total} cells, got {len(data) - header}")
    body = np.frombuffer(data, dtype=np.uint8, offset=header)
    if (body > 1).any():
        raise MapLoadError(f"{path.name}: grid bytes must be 0 or 1")
    return body.reshape(counts).copy()


def save_pgm(occ: np.ndarray, path, maxval: int = 255) -> None:
    """Write an (x, y) occupancy array as a binary P5 PGM (obstacle = black)."""
    img = np.where(occ.T > 0, 0, maxval).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        fh.write(img.tobytes())


def save_grid(occ: np.ndarray, path) -> None:
    occ = np.ascontiguousarray(occ, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", occ.ndim))
        fh.write(struct.pack(f"<{occ.ndim}I", *occ.shape))
        fh.write(occ.tobytes())


# ---------------------------------------------------------------------------
# scenarios

@dataclass
class Scenario:
    """One planning problem plus every tunable the planners read.

    The first block mirrors the scenario file's required keys; the rest are
    optional keys with defaults, overridable from files or the CLI.
    """

    map_path: str
    start: np.ndarray
    goal: np.ndarray
    node_budget: int
    epsilon: float
    eta: float = 0.02
    num_arms: int = 16
    seed: int = 0
    collision_resolution: float = 0.5

    planner: str = "rrdt"
    goal_bias: float = 0.05
    initial_probability: float = 0.4
    decay: float = 0.95
    learn_rate: float = 0.1
    base_kappa: float = 2.0
    failure_relax: float = 0.8
    gamma_rewire: float | None = None
    max_iterations: int | None = None

    def __post_init__(self):
        self.start = as_config(self.start)
        self.goal = as_config(self.goal)
        if self.node_budget < 0:
            raise ScenarioError("node_budget must be >= 0")
        if not (self.epsilon > self.collision_resolution):
            raise ScenarioError("epsilon must exceed collision_resolution")
        if not (0 < self.eta < 1):
            raise ScenarioError("eta must lie in (0, 1)")
        if self.num_arms < 1:
            raise ScenarioError("num_arms must be >= 1")
        if not (0 <= self.seed <= 2**64 - 1):
            raise ScenarioError("seed must be a 64-bit unsigned integer")
        if not (self.eta < self.initial_probability <= 1):
            raise ScenarioError("initial_probability must lie in (eta, 1]")

    def iteration_cap(self) -> int:
        return self.max_iterations if self.max_iterations is not None \
            else 100 * max(self.node_budget, 1)


_REQUIRED_KEYS = ("map_path", "start", "goal", "node_budget", "epsilon",
                  "eta", "num_arms", "seed", "collision_resolution")
_INT_KEYS = {"node_budget", "num_arms", "seed", "max_iterations"}
_FLOAT_KEYS = {"epsilon", "eta", "collision_resolution", "goal_bias",
               "initial_probability", "decay", "learn_rate", "base_kappa",
               "failure_relax", "gamma_rewire"}
_VEC_KEYS = {"start", "goal"}


def parse_kv_file(path) -> dict[str, str]:
    """Parse the shared `key = value` text format (one pair per line)."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ScenarioError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def coerce_scenario_value(key: str, raw):
    if not isinstance(raw, str):
        return raw
    if key in _VEC_KEYS:
        return np.array([float(t) for t in raw.split(",")], dtype=np.float64)
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw


def load_scenario(path, overrides: dict[str, str] | None = None) -> Scenario:
    pairs = parse_kv_file(path)
    if overrides:
        pairs.update(overrides)
    missing = [k for k in _REQUIRED_KEYS if k not in pairs]
    if missing:
        raise ScenarioError(f"{path}: missing scenario keys: {', '.join(missing)}")
    known = {f.name for f in fields(Scenario)}
    unknown = [k for k in pairs if k not in known]
    if unknown:
        raise ScenarioError(f"{path}: unknown scenario keys: {', '.join(unknown)}")
    kwargs = {k: coerce_scenario_value(k, v) for k, v in pairs.items()}
    map_path = Path(kwargs["map_path"])
    if not map_path.is_absolute():
        kwargs["map_path"] = str((Path(path).parent / map_path).resolve())
    return Scenario(**kwargs)


def validate_scenario(scenario: Scenario, env: Environment) -> None:
    for name, q in (("start", scenario.start), ("goal", scenario.goal)):
        if q.size != env.dimension:
            raise ScenarioError(f"{name} has dimension {q.size}, map has {env.dimension}")
        if not is_free(env, q):
            raise ScenarioError(f"{name} {q.tolist()} is not in free space")
