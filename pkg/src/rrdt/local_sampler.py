"""MCMC random-walk proposal machinery.

Each walker proposes fixed-length steps whose direction is drawn from a von
Mises-Fisher distribution; the mean direction tracks the last successful
step and the concentration relaxes multiplicatively after failures, so a
blocked walker widens its search until it finds a free route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_BASE_KAPPA = 2.0
DEFAULT_FAILURE_RELAX = 0.8


@dataclass
class DirectionDistribution:
    mean_direction: np.ndarray  # unit vector
    kappa: float                # >= 0; 0 means uniform on the sphere

    def __post_init__(self):
        self.mean_direction = np.asarray(self.mean_direction, dtype=np.float64)
        norm = float(np.linalg.norm(self.mean_direction))
        if not math.isfinite(self.kappa) or self.kappa < 0:
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"mean_direction must be a unit vector, |v| = {norm}")
        self._cached_kappa = -1.0

    def _constants(self) -> tuple[float, float, float]:
        """Rejection-scheme constants, recomputed only when kappa changes."""
        if self._cached_kappa != self.kappa:
            d, kappa = len(self.mean_direction), self.kappa
            self._b = (d - 1) / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa
                                                         + (d - 1) ** 2))
            self._x0 = (1.0 - self._b) / (1.0 + self._b)
            self._c = kappa * self._x0 + (d - 1) * math.log(1.0 - self._x0 * self._x0)
            self._cached_kappa = kappa
        return self._b, self._x0, self._c


@dataclass
class LocalSamplerState:
    position: np.ndarray
    proposal: DirectionDistribution
    consecutive_failures: int = 0
    base_kappa: float = DEFAULT_BASE_KAPPA
    failure_relax: float = DEFAULT_FAILURE_RELAX


def random_unit_vector(dim: int, rng) -> np.ndarray:
    while True:
        v = rng.standard_normal(dim)
        norm = float(np.linalg.norm(v))
        if norm > 1e-12:
            return v / norm


def make_walker(position, rng, base_kappa: float = DEFAULT_BASE_KAPPA,
                failure_relax: float = DEFAULT_FAILURE_RELAX) -> LocalSamplerState:
    """Fresh walker at a position, mean direction drawn uniformly."""
    position = np.asarray(position, dtype=np.float64)
    direction = random_unit_vector(len(position), rng)
    return LocalSamplerState(position=position.copy(),
                             proposal=DirectionDistribution(direction, base_kappa),
                             base_kappa=base_kappa, failure_relax=failure_relax)


def sample_vmf(dist: DirectionDistribution, rng) -> np.ndarray:
    """One unit vector ~ vMF(mean, kappa), any dimension >= 2.

    Tangent-normal construction: the axial component w along the mean uses
    the standard rejection scheme (Ulrich/Wood), the tangent part is uniform
    on the orthogonal subsphere.
    """
    mu = dist.mean_direction
    d = len(mu)
    kappa = dist.kappa
    if kappa == 0.0:
        return random_unit_vector(d, rng)
    b, x0, c = dist._constants()
    while True:
        z = rng.beta((d - 1) / 2.0, (d - 1) / 2.0)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform()
        if kappa * w + (d - 1) * math.log(1.0 - x0 * w) - c >= math.log(u):
            break
    tangential = math.sqrt(max(0.0, 1.0 - w * w))
    if d == 2:
        # the tangent subsphere is just a sign choice
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        m0, m1 = float(mu[0]), float(mu[1])
        return np.array([w * m0 - sign * tangential * m1,
                         w * m1 + sign * tangential * m0])
    while True:
        v = rng.standard_normal(d)
        v -= (v @ mu) * mu
        norm = math.sqrt(float(v @ v))
        if norm > 1e-12:
            v /= norm
            break
    return tangential * v + w * mu


def propose(state: LocalSamplerState, epsilon: float, rng) -> np.ndarray:
    """Candidate configuration one epsilon-step from the walker (no mutation).

    Out-of-bounds candidates are returned as-is; the caller's validity check
    is what rejects them.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return state.position + epsilon * sample_vmf(state.proposal, rng)


def report_success(state: LocalSamplerState, q_new) -> None:
    """Advance the walker and aim the proposal along the accepted step."""
    q_new = np.asarray(q_new, dtype=np.float64)
    step = q_new - state.position
    norm = math.sqrt(float(step @ step))
    if norm == 0.0:
        raise ValueError("zero-length step cannot define a direction")
    state.proposal.mean_direction = step / norm
    state.proposal.kappa = state.base_kappa
    state.position = q_new.copy()
    state.consecutive_failures = 0


def report_failure(state: LocalSamplerState) -> None:
    """Widen the proposal; the walker itself does not move."""
    state.consecutive_failures += 1
    state.proposal.kappa *= state.failure_relax
