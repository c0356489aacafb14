"""Reward models, per-round feedback and pseudo-regret accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import ProbGraph, observed_from_mask, sample_live_mask

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"
FAMILIES = (GAUSSIAN, BERNOULLI)

ONE_STEP = "one-step"
CASCADE = "cascade"
MODES = (ONE_STEP, CASCADE)

BERNOULLI_CLAMP = 1e-6


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class RewardModel:
    """Reward family plus the vector of arm means.

    ``gaussian`` means unit-variance normal rewards; ``bernoulli`` means
    0/1 rewards with means strictly inside (0, 1).
    """

    family: str
    theta: tuple[float, ...]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ModelError(f"unknown reward family {self.family!r}; expected one of {FAMILIES}")
        theta = tuple(float(x) for x in self.theta)
        if not theta:
            raise ModelError("theta must be non-empty")
        if not all(math.isfinite(x) for x in theta):
            raise ModelError("theta entries must be finite")
        if self.family == BERNOULLI and not all(0.0 < x < 1.0 for x in theta):
            raise ModelError("bernoulli means must lie in (0, 1)")
        object.__setattr__(self, "theta", theta)

    @property
    def num_arms(self) -> int:
        return len(self.theta)

    @property
    def best_arm(self) -> int:
        return int(np.argmax(self.theta))

    @property
    def gaps(self) -> np.ndarray:
        theta = np.asarray(self.theta)
        return theta.max() - theta


def sample_rewards(model: RewardModel, rng: np.random.Generator) -> np.ndarray:
    theta = np.asarray(model.theta)
    if model.family == GAUSSIAN:
        return theta + rng.standard_normal(theta.size)
    return (rng.random(theta.size) < theta).astype(float)


def kl(family: str, mean_a: float, mean_b: float) -> float:
    """Mean-parameterised KL divergence ``KL(mean_a || mean_b)``.

    Bernoulli means are clamped to ``[1e-6, 1 - 1e-6]`` so empirical means at
    0 or 1 stay finite.
    """
    if not (math.isfinite(mean_a) and math.isfinite(mean_b)):
        raise ModelError(f"kl needs finite means, got {mean_a!r}, {mean_b!r}")
    if family == GAUSSIAN:
        return 0.5 * (mean_a - mean_b) ** 2
    if family == BERNOULLI:
        a = min(max(mean_a, BERNOULLI_CLAMP), 1.0 - BERNOULLI_CLAMP)
        b = min(max(mean_b, BERNOULLI_CLAMP), 1.0 - BERNOULLI_CLAMP)
        if a == b:
            return 0.0
        return a * math.log(a / b) + (1.0 - a) * math.log((1.0 - a) / (1.0 - b))
    raise ModelError(f"unknown reward family {family!r}")


@dataclass(frozen=True)
class FeedbackEvent:
    t: int
    arm: int
    observations: tuple[tuple[int, float], ...]


def _check_mode(mode: str) -> bool:
    if mode not in MODES:
        raise ModelError(f"unknown feedback mode {mode!r}; expected one of {MODES}")
    return mode == CASCADE


def env_step(graph: ProbGraph, model: RewardModel, mode: str, arm: int,
             rng: np.random.Generator, t: int = 1) -> tuple[FeedbackEvent, float]:
    """Play ``arm`` for one round: draw rewards, draw a realization, reveal feedback.

    Returns the feedback event and the pseudo-regret increment
    ``max(theta) - theta[arm]``.
    """
    cascade = _check_mode(mode)
    if not 0 <= arm < graph.num_arms:
        raise ModelError(f"arm {arm} out of range")
    rewards = sample_rewards(model, rng)
    live = sample_live_mask(graph, rng)
    seen = observed_from_mask(graph, live, arm, cascade)
    event = FeedbackEvent(t, arm, tuple((j, float(rewards[j])) for j in seen))
    return event, float(max(model.theta) - model.theta[arm])


@dataclass
class Environment:
    """Stateful environment for one replication; owns its random stream."""

    graph: ProbGraph
    model: RewardModel
    mode: str
    rng: np.random.Generator
    t: int = 0
    regret: float = 0.0
    _gaps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.model.num_arms != self.graph.num_arms:
            raise ModelError(
                f"reward model has {self.model.num_arms} arms but graph has {self.graph.num_arms}")
        self._cascade = _check_mode(self.mode)
        self._gaps = self.model.gaps
        self._theta = np.asarray(self.model.theta)
        self._gaussian = self.model.family == GAUSSIAN

    def step(self, arm: int) -> tuple[FeedbackEvent, float]:
        self.t += 1
        rng = self.rng
        K = self._theta.size
        if self._gaussian:
            rewards = self._theta + rng.standard_normal(K)
        else:
            rewards = (rng.random(K) < self._theta).astype(float)
        live = rng.random(self.graph.num_edges) < self.graph.prob
        seen = observed_from_mask(self.graph, live, arm, self._cascade)
        event = FeedbackEvent(self.t, arm, tuple((j, float(rewards[j])) for j in seen))
        inc = float(self._gaps[arm])
        self.regret += inc
        return event, inc


@dataclass
class RegretTrace:
    """Cumulative pseudo-regret of one replication at checkpoint rounds."""

    horizon: int
    checkpoints: list[tuple[int, float]]
    seed: int
    config_digest: str = ""
    branch_counts: dict[str, int] = field(default_factory=dict)
    branch_last: dict[str, int] = field(default_factory=dict)

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.checkpoints])


def expected_uniform_regret(model: RewardModel, t: int) -> float:
    """Closed-form expected pseudo-regret of uniformly random play after ``t`` rounds."""
    return float(t * np.mean(model.gaps))
