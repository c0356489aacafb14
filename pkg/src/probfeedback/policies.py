"""LP-guided exploration policies for probabilistic graph feedback, plus baselines.

The three LP-guided policies share one branch cascade, evaluated in order every
round:

``B``  some arm is observed less than half as often as expected -> re-observe it
``D``  current play counts already cover the LP constraints -> exploit
``E``  some arm's expected observation count lags the forced-exploration schedule
``F``  play the arm furthest below its LP exploration rate

They differ only in the coefficient matrix (direct edge probabilities or
thresholded path probabilities) and in how an observer of a given arm is picked.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import lp
from .env import FeedbackEvent
from .graph import GraphError, ProbGraph, threshold_matrix

log = logging.getLogger(__name__)

EXPLORE_CONST = 16.0
HALVING = 2.0
LP_BRANCHES = ("B", "D", "E", "F")


class PolicyError(RuntimeError):
    pass


@dataclass(frozen=True)
class Schedules:
    """``beta(n) = beta_a * n**beta_b`` and ``eta(t) = max(eta_min, t**-eta_exp)``."""

    beta_a: float = 0.5
    beta_b: float = 0.5
    eta_min: float = 0.05
    eta_exp: float = 1.0 / 3.0

    def __post_init__(self):
        if not 0.0 < self.beta_a <= 0.5:
            raise ValueError(f"beta_a must lie in (0, 0.5], got {self.beta_a}")
        if not 0.0 < self.beta_b < 1.0:
            raise ValueError(f"beta_b must lie in (0, 1), got {self.beta_b}")
        if not 0.0 < self.eta_min < 1.0:
            raise ValueError(f"eta_min must lie in (0, 1), got {self.eta_min}")
        if not self.eta_exp > 0.0:
            raise ValueError(f"eta_exp must be positive, got {self.eta_exp}")


def beta(n: int, schedules: Schedules) -> float:
    return schedules.beta_a * n**schedules.beta_b if n > 0 else 0.0


def eta(t: int, schedules: Schedules) -> float:
    return max(schedules.eta_min, float(t) ** -schedules.eta_exp)


def log_term(t: int) -> float:
    """``ln(max(t - 1, e))``: the ``log(t-1)`` of the exploration test, floored at 1."""
    return math.log(max(t - 1, math.e))


@dataclass
class PolicyState:
    """Per-run counters: plays ``N``, (played, observed) pairs ``n``, observations ``m``."""

    num_arms: int
    t: int = 0
    N_e: int = 0
    N: np.ndarray = field(default=None)
    n: np.ndarray = field(default=None)
    m: np.ndarray = field(default=None)
    obs_sum: np.ndarray = field(default=None)
    theta_hat: np.ndarray = field(default=None)

    def __post_init__(self):
        K = self.num_arms
        if self.N is None:
            self.N = np.zeros(K)
        if self.n is None:
            self.n = np.zeros((K, K))
        if self.m is None:
            self.m = np.zeros(K)
        if self.obs_sum is None:
            self.obs_sum = np.zeros(K)
        if self.theta_hat is None:
            self.theta_hat = np.ones(K)

    def violations(self) -> list[str]:
        out = []
        if not np.array_equal(self.m, self.n.sum(axis=0)):
            out.append("m differs from the column sums of n")
        if self.N.sum() != self.t:
            out.append(f"sum(N) = {self.N.sum()} but t = {self.t}")
        if not 0 <= self.N_e <= self.t:
            out.append(f"N_e = {self.N_e} outside [0, t]")
        seen = self.m > 0
        if not np.allclose(self.theta_hat[seen], self.obs_sum[seen] / self.m[seen]):
            out.append("theta_hat differs from obs_sum / m")
        if not np.all(self.theta_hat[~seen] == 1.0):
            out.append("unobserved arm has theta_hat != 1")
        return out


class Decision(NamedTuple):
    arm: int
    branch: str
    explore: bool = False


def update_state(state: PolicyState, event: FeedbackEvent, decision: Decision | None = None) -> PolicyState:
    """Fold one round of feedback into ``state`` (in place) and return it."""
    if event.t != state.t + 1:
        raise PolicyError(f"event for round {event.t} applied to state at round {state.t}")
    arms = [j for j, _ in event.observations]
    if len(set(arms)) != len(arms):
        raise PolicyError(f"round {event.t}: an arm appears twice among the observations")
    i = event.arm
    state.t += 1
    state.N[i] += 1
    for j, r in event.observations:
        state.n[i, j] += 1
        state.m[j] += 1
        state.obs_sum[j] += r
        state.theta_hat[j] = state.obs_sum[j] / state.m[j]
    if decision is not None and decision.explore:
        state.N_e += 1
    return state


def _argmax_rows(matrix: np.ndarray, j: int, candidates) -> int:
    """Candidate row maximising ``matrix[i, j]``; ties go to the smallest index."""
    best, best_val = None, -math.inf
    for i in candidates:
        v = matrix[i, j]
        if v > best_val:
            best, best_val = i, v
    return int(best)


def _lp_guided(state: PolicyState, M: np.ndarray, instance: lp.LPInstance, observer, forced,
               schedules: Schedules, explore_const: float, halving: float,
               warm: lp.WarmStart | None) -> Decision:
    t = state.t + 1
    L = log_term(t)
    short = state.m < M / halving
    if short.any():
        return Decision(observer(int(short.argmax())), "B", False)
    if lp.is_member(instance, state.N / (explore_const * L)):
        return Decision(instance.best, "D", False)
    starving = M < 2.0 * beta(state.N_e, schedules) / state.num_arms
    if starving.any():
        return Decision(forced(int(starving.argmax())), "E", True)
    sol = lp.solve(instance, warm)
    deficit = explore_const * L * sol.c - state.N
    arm = int(deficit.argmax())
    if not deficit[arm] > 0:
        raise PolicyError(
            f"round {t}: no arm below its LP exploration rate although the exploitation test failed")
    return Decision(arm, "F", True)


def select_one_step_uniform(state: PolicyState, graph: ProbGraph, p: float, family: str,
                            gap_floor: float = lp.DEFAULT_GAP_FLOOR,
                            schedules: Schedules = Schedules(), *,
                            rhs_mode: str = lp.INVERSE_KL, explore_const: float = EXPLORE_CONST,
                            halving: float = HALVING, warm: lp.WarmStart | None = None) -> Decision:
    """One-step policy for graphs whose edges all share probability ``p``."""
    adjacency = graph.weights > 0
    M = p * (state.N @ adjacency)
    instance = lp.build_constraints(p * adjacency, state.theta_hat, family, rhs_mode, gap_floor)

    def first_in_neighbor(j):
        return graph.in_neighbors(j)[0]

    return _lp_guided(state, M, instance, first_in_neighbor, first_in_neighbor,
                      schedules, explore_const, halving, warm)


def select_one_step_general(state: PolicyState, graph: ProbGraph, family: str,
                            gap_floor: float = lp.DEFAULT_GAP_FLOOR,
                            schedules: Schedules = Schedules(), *,
                            rhs_mode: str = lp.INVERSE_KL, explore_const: float = EXPLORE_CONST,
                            halving: float = HALVING, warm: lp.WarmStart | None = None) -> Decision:
    """One-step policy for arbitrary edge probabilities; observers maximise ``p_ij``."""
    W = graph.weights
    M = state.N @ W
    instance = lp.build_constraints(W, state.theta_hat, family, rhs_mode, gap_floor)

    def best_in_neighbor(j):
        return _argmax_rows(W, j, graph.in_neighbors(j))

    return _lp_guided(state, M, instance, best_in_neighbor, best_in_neighbor,
                      schedules, explore_const, halving, warm)


def select_cascade(state: PolicyState, graph: ProbGraph, P_t: np.ndarray, family: str,
                   gap_floor: float = lp.DEFAULT_GAP_FLOOR,
                   schedules: Schedules = Schedules(), *,
                   rhs_mode: str = lp.INVERSE_GAP_SQUARED, explore_const: float = EXPLORE_CONST,
                   halving: float = HALVING, warm: lp.WarmStart | None = None) -> Decision:
    """Cascade policy on a thresholded path-probability matrix ``P_t``.

    Re-observation (branch B) may use any arm via paths; forced exploration
    (branch E) uses direct in-neighbors of the original graph. If thresholding
    leaves some arm with no positive coefficient, the LP is infeasible and the
    round falls back to forced exploration of that arm.
    """
    P_t = np.asarray(P_t, dtype=float)
    M = state.N @ P_t
    instance = lp.build_constraints(P_t, state.theta_hat, family, rhs_mode, gap_floor)
    rows = range(state.num_arms)

    def path_observer(j):
        return _argmax_rows(P_t, j, rows)

    def in_neighbor(j):
        return _argmax_rows(P_t, j, graph.in_neighbors(j))

    try:
        return _lp_guided(state, M, instance, path_observer, in_neighbor,
                          schedules, explore_const, halving, warm)
    except lp.LPInfeasible as exc:
        log.info("round %d: %s; forcing exploration of arm %d", state.t + 1, exc, exc.column)
        return Decision(in_neighbor(exc.column), "E", True)


def ucb1_select(state: PolicyState) -> int:
    """UCB1 on observation counts; never-observed arms first (smallest index)."""
    unseen = np.flatnonzero(state.m == 0)
    if unseen.size:
        return int(unseen[0])
    t = max(state.t, 1)
    index = state.theta_hat + np.sqrt(2.0 * math.log(t) / state.m)
    return int(np.argmax(index))


class Policy:
    """Binds a selection rule to one problem; ``select`` is called once per round."""

    name = "policy"

    def select(self, state: PolicyState) -> Decision:
        raise NotImplementedError

    @property
    def branches(self) -> tuple[str, ...]:
        return LP_BRANCHES


@dataclass
class _LPPolicyConfig:
    family: str
    gap_floor: float = lp.DEFAULT_GAP_FLOOR
    schedules: Schedules = field(default_factory=Schedules)
    rhs_mode: str | None = None
    explore_const: float = EXPLORE_CONST
    halving: float = HALVING

    def kwargs(self, default_rhs: str) -> dict:
        return dict(rhs_mode=self.rhs_mode or default_rhs, explore_const=self.explore_const,
                    halving=self.halving)


class OneStepUniformPolicy(Policy):
    name = "one-step-uniform"

    def __init__(self, graph: ProbGraph, family: str, **options):
        p = graph.uniform_prob
        if p is None:
            raise GraphError("one-step-uniform policy needs all edge probabilities equal")
        self.graph, self.p = graph, p
        self.cfg = _LPPolicyConfig(family, **options)
        self.warm = lp.WarmStart()

    def select(self, state):
        c = self.cfg
        return select_one_step_uniform(state, self.graph, self.p, c.family, c.gap_floor, c.schedules,
                                       warm=self.warm, **c.kwargs(lp.INVERSE_KL))


class OneStepGeneralPolicy(Policy):
    name = "one-step-general"

    def __init__(self, graph: ProbGraph, family: str, **options):
        self.graph = graph
        self.cfg = _LPPolicyConfig(family, **options)
        self.warm = lp.WarmStart()

    def select(self, state):
        c = self.cfg
        return select_one_step_general(state, self.graph, c.family, c.gap_floor, c.schedules,
                                       warm=self.warm, **c.kwargs(lp.INVERSE_KL))


class CascadePolicy(Policy):
    """Cascade policy; ``connection`` is a (usually Monte-Carlo) path-probability estimate."""

    name = "cascade"

    def __init__(self, graph: ProbGraph, connection: np.ndarray, family: str, **options):
        self.graph = graph
        self.connection = np.asarray(connection, dtype=float)
        self.cfg = _LPPolicyConfig(family, **options)
        self.warm = lp.WarmStart()
        self._P = None

    def matrix_at(self, t: int) -> np.ndarray:
        P = threshold_matrix(self.connection, eta(t, self.cfg.schedules))
        # keep one object per distinct matrix so the LP warm start can recognise it
        if self._P is None or not np.array_equal(P, self._P):
            self._P = P
        return self._P

    def select(self, state):
        c = self.cfg
        P_t = self.matrix_at(state.t + 1)
        return select_cascade(state, self.graph, P_t, c.family, c.gap_floor, c.schedules,
                              warm=self.warm, **c.kwargs(lp.INVERSE_GAP_SQUARED))


class UCB1Policy(Policy):
    name = "ucb1"

    def select(self, state):
        return Decision(ucb1_select(state), "ucb", False)

    @property
    def branches(self):
        return ("ucb",)


class UniformRandomPolicy(Policy):
    name = "uniform-random"

    def __init__(self, num_arms: int, rng: np.random.Generator):
        self.num_arms, self.rng = num_arms, rng

    def select(self, state):
        return Decision(int(self.rng.integers(self.num_arms)), "random", False)

    @property
    def branches(self):
        return ("random",)
