"""RRdT*: a forest of locally exploring disjointed trees scheduled by a
mortal multi-armed bandit, with RRT*, Bi-RRT*, Informed RRT* and PRM*
baselines and a deterministic benchmark harness.
"""

from .env import Environment, Scenario, is_free, load_map, sample_free, segment_free
from .forest import Forest, Path
from .kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION
from .planners import PLANNERS, EventKind, PlannerResult, plan

__version__ = "0.1.0"

__all__ = [
    "Environment", "Scenario", "Forest", "Path", "PlannerResult", "EventKind",
    "PLANNERS", "plan", "load_map", "is_free", "segment_free", "sample_free",
    "KERNEL_IMPLEMENTATION", "__version__",
]
