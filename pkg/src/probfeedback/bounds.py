"""Asymptotic regret lower-bound constants (coefficients of ``log T``)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .env import CASCADE, ONE_STEP, RewardModel
from .graph import ProbGraph, require_valid


class BoundError(ValueError):
    pass


@dataclass(frozen=True)
class BoundReport:
    value: float
    witness: np.ndarray
    mode: str
    source: str

    def lines(self) -> list[str]:
        return [
            f"mode={self.mode}",
            f"source={self.source}",
            f"value={self.value:.6f}",
            "witness=" + ",".join(f"{x:.6f}" for x in self.witness),
        ]


def _require_unique_best(model: RewardModel, gap_floor: float):
    theta = np.sort(np.asarray(model.theta))[::-1]
    if theta.size < 2:
        raise BoundError("need at least two arms")
    if theta[0] - theta[1] <= gap_floor:
        raise BoundError(
            f"best arm is not unique: top two means differ by {theta[0] - theta[1]:.3g} <= {gap_floor:g}")


def _bound(P, model: RewardModel, gap_floor: float, mode: str, source: str) -> BoundReport:
    _require_unique_best(model, gap_floor)
    instance = lp.build_constraints(P, model.theta, model.family, lp.INVERSE_KL, gap_floor)
    sol = lp.solve(instance)
    return BoundReport(sol.value, sol.c, mode, source)


def lower_bound_one_step(graph: ProbGraph, model: RewardModel,
                         gap_floor: float = lp.DEFAULT_GAP_FLOOR) -> BoundReport:
    """``min <c, gaps>`` over rates whose direct-edge observation rates reach ``1/KL`` for every arm."""
    require_valid(graph)
    if graph.num_arms != model.num_arms:
        raise BoundError(f"graph has {graph.num_arms} arms, model has {model.num_arms}")
    return _bound(graph.weights, model, gap_floor, ONE_STEP, "direct")


def lower_bound_cascade(connection, model: RewardModel, gap_floor: float = lp.DEFAULT_GAP_FLOOR,
                        source: str = "exact") -> BoundReport:
    """Same program with path-connection probabilities as coefficients.

    ``source`` records where ``connection`` came from (``exact`` or
    ``monte-carlo(N)``), since exact path probabilities are intractable on
    large graphs.
    """
    connection = np.asarray(connection, dtype=float)
    if connection.shape != (model.num_arms, model.num_arms):
        raise BoundError(f"connection matrix shape {connection.shape} does not match {model.num_arms} arms")
    return _bound(connection, model, gap_floor, CASCADE, source)
