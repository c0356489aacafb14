"""Exploration-rate linear programs.

Every LP here has the covering form::

    minimise   <delta, c>
    subject to sum_i P[i, j] * c_i >= b_j   for every arm j
               c >= 0

Column ``j`` of ``P`` says how much playing each arm reveals about arm ``j``;
``b_j`` is how much information about ``j`` is needed (``1/KL`` or ``1/gap^2``);
``delta_i`` is the regret cost of playing ``i``. The solver runs a dense tableau
simplex on the dual (``max <b, y>`` s.t. ``P y <= delta``, ``y >= 0``), for which
the slack basis is always feasible because ``delta >= 0``. The primal rates are
read off as shadow prices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import BERNOULLI, BERNOULLI_CLAMP, GAUSSIAN, ModelError
from .graph import ProbGraph

INVERSE_KL = "inverse-kl"
INVERSE_GAP_SQUARED = "inverse-gap-squared"
RHS_MODES = (INVERSE_KL, INVERSE_GAP_SQUARED)

DEFAULT_GAP_FLOOR = 1e-6
PIVOT_TOL = 1e-9
_REDUCED_COST_TOL = 1e-12


class LPError(ValueError):
    pass


class LPInfeasible(LPError):
    """Some constraint column has no positive coefficient."""

    def __init__(self, column: int):
        super().__init__(f"constraint {column} has no positive coefficient; arm {column} is unobservable")
        self.column = column


@dataclass(frozen=True)
class LPInstance:
    P: np.ndarray
    b: np.ndarray
    delta: np.ndarray
    best: int

    @property
    def num_arms(self) -> int:
        return self.b.size

    def objective(self, c) -> float:
        return float(np.dot(self.delta, c))


@dataclass(frozen=True)
class LPSolution:
    c: np.ndarray
    value: float
    basis: tuple[int, ...]


def _kl_to_best(family: str, means: np.ndarray, best_mean: float) -> np.ndarray:
    if family == GAUSSIAN:
        return 0.5 * (means - best_mean) ** 2
    if family == BERNOULLI:
        a = np.clip(means, BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP)
        b = min(max(best_mean, BERNOULLI_CLAMP), 1.0 - BERNOULLI_CLAMP)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a * np.log(a / b) + (1.0 - a) * np.log((1.0 - a) / (1.0 - b))
        return np.where(a == b, 0.0, np.maximum(out, 0.0))
    raise ModelError(f"unknown reward family {family!r}")


def rhs_and_costs(theta, family: str, mode: str, gap_floor: float = DEFAULT_GAP_FLOOR):
    """Right-hand sides ``b``, costs ``delta`` and best index for mean vector ``theta``.

    Gaps below ``gap_floor`` are raised to ``gap_floor``. The best arm's own
    constraint borrows the right-hand side of the second-best arm.
    """
    theta = np.asarray(theta, dtype=float)
    K = theta.size
    if K < 2:
        raise LPError("need at least two arms")
    best = int(theta.argmax())
    top = theta[best]
    raw = top - theta
    gaps = np.maximum(raw, gap_floor)
    others = theta.copy()
    others[best] = -np.inf
    second = int(others.argmax())
    # clamped gaps with the best arm's constraint borrowing the second-best gap
    g = gaps.copy()
    g[best] = gaps[second]
    gaps[best] = 0.0

    if mode == INVERSE_GAP_SQUARED:
        b = 1.0 / (g * g)
    elif mode == INVERSE_KL:
        if family == GAUSSIAN:
            b = 2.0 / (g * g)
        else:
            means = np.where(raw >= gap_floor, theta, top - gap_floor)
            means[best] = means[second]
            with np.errstate(divide="ignore"):
                b = 1.0 / _kl_to_best(family, means, top)
    else:
        raise LPError(f"unknown rhs mode {mode!r}; expected one of {RHS_MODES}")
    return b, gaps, best


def build_constraints(P, theta, family: str, mode: str,
                      gap_floor: float = DEFAULT_GAP_FLOOR) -> LPInstance:
    """LP instance with coefficient matrix ``P`` (rows: played arm, columns: observed arm)."""
    P = np.asarray(P, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if P.shape != (theta.size, theta.size):
        raise LPError(f"coefficient matrix shape {P.shape} does not match {theta.size} arms")
    b, delta, best = rhs_and_costs(theta, family, mode, gap_floor)
    return LPInstance(P, b, delta, best)


def build_one_step_constraints(graph: ProbGraph, theta, family: str, mode: str = INVERSE_KL,
                               gap_floor: float = DEFAULT_GAP_FLOOR) -> LPInstance:
    return build_constraints(graph.weights, theta, family, mode, gap_floor)


def build_cascade_constraints(P_matrix, theta, family: str, mode: str = INVERSE_GAP_SQUARED,
                              gap_floor: float = DEFAULT_GAP_FLOOR) -> LPInstance:
    return build_constraints(P_matrix, theta, family, mode, gap_floor)


def is_member(instance: LPInstance, c) -> bool:
    """True iff ``c`` satisfies every covering constraint (``+inf`` right-hand sides never do)."""
    return bool((instance.P.T @ np.asarray(c, dtype=float) >= instance.b).all())


def zero_columns(P) -> list[int]:
    P = np.asarray(P)
    return [int(j) for j in np.flatnonzero(~np.any(P > 0.0, axis=0))]


class WarmStart:
    """Carries the last optimal basis between solves that share one coefficient matrix.

    A policy re-solves nearly the same LP every round; when the previous basis
    is still primal and dual feasible no pivoting is needed at all.
    """

    def __init__(self):
        self.P = None
        self.basis = None
        self.tableau = None
        self.hits = 0
        self.misses = 0

    def store(self, P, basis, tableau):
        self.misses += 1
        K = len(basis)
        self.P, self.basis, self.tableau = P, tuple(basis), tableau
        self.inverse = np.ascontiguousarray(tableau[:, K:])
        bas = np.asarray(basis)
        self.y_rows = np.flatnonzero(bas < K)
        self.y_vars = bas[self.y_rows]

    def matches(self, P) -> bool:
        return self.P is not None and (self.P is P or np.array_equal(self.P, P))


def solve(instance: LPInstance, warm: WarmStart | None = None) -> LPSolution:
    """Minimal-cost feasible exploration rates.

    With ``warm`` the dual simplex starts from the previous optimal basis when
    it is still feasible, otherwise from the slack basis. Bland's rule is used
    throughout, so results are deterministic.
    """
    P, b, delta = instance.P, instance.b, instance.delta
    K = b.size
    reuse = warm is not None and warm.matches(P)
    if not reuse:
        bad = zero_columns(P)
        if bad:
            raise LPInfeasible(bad[0])
    sb = b.max()
    if not (b.min() > 0.0 and sb < np.inf):
        raise LPError("right-hand sides must be finite and positive")
    sd = delta.max()
    if not (delta.min() >= 0.0 and sd < np.inf):
        raise LPError("costs must be finite and non-negative")
    sb, sd = float(sb), float(sd) or 1.0

    if reuse and warm.basis is not None:
        # optimality test for the cached basis, in unscaled units
        if (warm.inverse @ delta).min() >= -PIVOT_TOL * sd:
            cB = np.zeros(K)
            cB[warm.y_rows] = b[warm.y_vars]
            reduced = cB @ warm.tableau
            reduced[:K] -= b
            if reduced.min() >= -_REDUCED_COST_TOL * sb:
                warm.hits += 1
                return _finish(P, b, delta, reduced[K:], warm.basis)

    cost = np.concatenate([b / sb, np.zeros(K)])
    rhs0 = delta / sd
    A = np.hstack([P, np.eye(K)])
    start = None
    if reuse and warm.basis is not None:
        start = _tableau_from_basis(A, rhs0, list(warm.basis))
    if start is None:
        start = (A, rhs0.copy(), list(range(K, 2 * K)))
    T, rhs, bas = start
    reduced = cost[bas] @ T - cost
    bas = _pivot_loop(T, rhs, reduced, cost, bas)
    if warm is not None:
        warm.store(P, bas, T)
    return _finish(P, b, delta, reduced[K:] * sb, bas)


def _finish(P, b, delta, shadow, bas) -> LPSolution:
    c = _make_feasible(P, b, shadow)
    return LPSolution(c, float(delta @ c), tuple(bas))


def _tableau_from_basis(A, rhs0, bas):
    try:
        B_inv = np.linalg.inv(A[:, bas])
    except np.linalg.LinAlgError:
        return None
    rhs = B_inv @ rhs0
    if rhs.min() < -PIVOT_TOL:
        return None
    return B_inv @ A, np.maximum(rhs, 0.0), bas


def _pivot_loop(T, rhs, reduced, cost, bas, max_iter: int = 10_000):
    K = rhs.size
    for _ in range(max_iter):
        candidates = np.flatnonzero(reduced < -_REDUCED_COST_TOL)
        if candidates.size == 0:
            return bas
        enter = int(candidates[0])
        col = T[:, enter]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            # dual unbounded; cannot happen once zero columns are excluded
            raise LPError("dual simplex found an unbounded ray")
        ratios = rhs[rows] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        leave = int(min(tied, key=lambda r: bas[r]))
        piv = T[leave, enter]
        T[leave] /= piv
        rhs[leave] /= piv
        factors = T[:, enter].copy()
        factors[leave] = 0.0
        T -= np.outer(factors, T[leave])
        rhs -= factors * rhs[leave]
        np.maximum(rhs, 0.0, out=rhs)
        reduced -= reduced[enter] * T[leave]
        bas[leave] = enter
    raise LPError(f"simplex did not terminate within {max_iter} pivots (K={K})")


def _make_feasible(P, b, c):
    # shadow prices can miss a constraint by a few ulps; rescale until exact
    c = np.maximum(c, 0.0)
    if (P.T @ c >= b).all():
        return c
    for _ in range(64):
        s = P.T @ c
        if np.all(s >= b):
            return c
        short = s < b
        if np.any(s[short] <= 0.0):
            raise LPError("solver returned rates that leave a constraint uncovered")
        ratio = float(np.max(b[short] / s[short]))
        if ratio > 1.0 + 1e-6:
            raise LPError(f"solver returned infeasible rates (shortfall factor {ratio})")
        c = c * max(ratio, 1.0) * (1.0 + 4 * np.finfo(float).eps)
    raise LPError("could not make LP solution exactly feasible")


def optimal_value(instance: LPInstance) -> float:
    return solve(instance).value
