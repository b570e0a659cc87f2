"""Mortal multi-armed bandit scheduler.

Arms wrap local-sampler walkers. Success probabilities are exponentially
weighted Bernoulli estimates decayed multiplicatively every iteration, so
every arm eventually expires (crosses eta) and gets restarted somewhere new:
that restart IS the planner's global exploration.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import local_sampler as ls
from .env import Environment, sample_free
from .forest import Forest


class ArmsExhausted(RuntimeError):
    """Every arm has zero probability; the caller must force restarts."""


@dataclass
class Arm:
    id: int
    sampler: ls.LocalSamplerState
    probability: float
    pulls: int
    home_tree: int


@dataclass(frozen=True)
class BanditConfig:
    eta: float = 0.02                 # restart threshold
    decay: float = 0.95               # per-iteration multiplicative decay
    learn_rate: float = 0.1           # EMA weight on the newest reward
    initial_probability: float = 0.4

    def __post_init__(self):
        if not (0 < self.eta < 1 and 0 < self.decay < 1 and 0 < self.learn_rate < 1):
            raise ValueError("eta, decay and learn_rate must lie in (0, 1)")
        if not (self.eta < self.initial_probability <= 1):
            raise ValueError("initial_probability must lie in (eta, 1]")


@dataclass
class RestartOutcome:
    added: bool                # a node (or whole tree) was added
    rejections: int = 0        # in-obstacle draws spent by sample_free
    new_tree: bool = False
    node_id: int | None = None
    arm_id: int | None = None  # the expired arm (or its replacement)

    def __bool__(self) -> bool:
        return self.added


def pick_arm(arms: list[Arm], rng) -> Arm:
    """Multinomial draw proportional to arm probabilities."""
    total = 0.0
    for a in arms:
        total += a.probability
    if total <= 0.0:
        raise ArmsExhausted("all arm probabilities are zero")
    u = rng.uniform() * total
    acc = 0.0
    last_positive = None
    for arm in arms:
        p = arm.probability
        if p > 0.0:
            acc += p
            last_positive = arm
            if u < acc:
                return arm
    return last_positive  # u landed on the accumulated total (rounding edge)


def apply_reward(arm: Arm, reward: int, config: BanditConfig) -> None:
    arm.probability = (1.0 - config.learn_rate) * arm.probability \
        + config.learn_rate * reward
    arm.pulls += 1


def decay_all(arms: list[Arm], config: BanditConfig) -> None:
    for arm in arms:
        arm.probability *= config.decay


def restart_arms(arms: list[Arm], forest: Forest, environment: Environment,
                 config: BanditConfig, rng,
                 make_sampler=None) -> RestartOutcome:
    """Restart at most one expired arm (scanned in arm-id order).

    The expired arm's replacement lands at a fresh uniform free sample: if
    that sample epsilon-joins an existing tree, the arm is relocated there
    (a node is added, no new tree); otherwise a new d-tree is founded and a
    brand-new arm replaces the expired one in place.
    """
    if make_sampler is None:
        def make_sampler(position, arm_id):
            return ls.make_walker(position, rng)
    idx = -1
    for k, candidate in enumerate(arms):
        if candidate.probability < config.eta and (idx < 0 or candidate.id < arms[idx].id):
            idx = k
    if idx >= 0:
        arm = arms[idx]
        q_rand, rejections = sample_free(environment, rng)
        report = forest.join_within_epsilon(q_rand, forest.epsilon, environment)
        if report is not None:
            arm.probability = config.initial_probability
            arm.sampler = make_sampler(q_rand, arm.id)
            arm.home_tree = report.tree_id
            return RestartOutcome(True, rejections, new_tree=False,
                                  node_id=report.node_id, arm_id=arm.id)
        tree_id = forest.insert_root(q_rand, "dtree")
        new_id = max(a.id for a in arms) + 1
        arms[idx] = Arm(id=new_id, sampler=make_sampler(q_rand, new_id),
                        probability=config.initial_probability, pulls=0,
                        home_tree=tree_id)
        return RestartOutcome(True, rejections, new_tree=True,
                              node_id=tree_id, arm_id=new_id)
    return RestartOutcome(False)
