"""Probabilistic feedback graphs, their random realizations and path probabilities.

A :class:`ProbGraph` carries one triggering probability per directed edge.
Each round every edge is live independently with its probability; the
learner observes arms along live edges (one-step) or along live directed
paths (cascade).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_ENUMERATION_LIMIT = 20


class GraphError(ValueError):
    """Raised for malformed graphs or operations a graph cannot support."""


class ProbGraph:
    """Directed graph on arms ``0..K-1`` with per-edge triggering probabilities.

    Edges are ``(src, dst, prob)`` triples; self-loops are allowed, duplicate
    ordered pairs are not. Instances are immutable after construction.
    """

    def __init__(self, num_arms: int, edges: Iterable[Sequence]):
        if int(num_arms) != num_arms or num_arms < 1:
            raise GraphError(f"num_arms must be a positive integer, got {num_arms!r}")
        self.num_arms = int(num_arms)
        seen = set()
        parsed = []
        for edge in edges:
            src, dst, prob = edge
            if int(src) != src or int(dst) != dst:
                raise GraphError(f"edge endpoints must be integers: {edge!r}")
            src, dst, prob = int(src), int(dst), float(prob)
            if not (0 <= src < self.num_arms and 0 <= dst < self.num_arms):
                raise GraphError(f"edge ({src}, {dst}) has an endpoint outside [0, {self.num_arms})")
            if (src, dst) in seen:
                raise GraphError(f"duplicate edge ({src}, {dst})")
            seen.add((src, dst))
            parsed.append((src, dst, prob))
        self.edges: tuple[tuple[int, int, float], ...] = tuple(parsed)

        self.src = np.array([e[0] for e in parsed], dtype=np.intp)
        self.dst = np.array([e[1] for e in parsed], dtype=np.intp)
        self.prob = np.array([e[2] for e in parsed], dtype=float)
        weights = np.zeros((self.num_arms, self.num_arms))
        weights[self.src, self.dst] = self.prob
        for arr in (self.src, self.dst, self.prob, weights):
            arr.setflags(write=False)
        self.weights = weights

        ins = [[] for _ in range(self.num_arms)]
        outs = [[] for _ in range(self.num_arms)]
        for k, (src, dst, _) in enumerate(parsed):
            ins[dst].append(src)
            outs[src].append(k)
        self._in = tuple(tuple(sorted(v)) for v in ins)
        # edge indices leaving each node, used by the per-round observation code
        self.out_edge_ids = tuple(tuple(v) for v in outs)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def in_neighbors(self, j: int) -> tuple[int, ...]:
        """Sorted in-neighbors ``V^in(j)``."""
        return self._in[j]

    @property
    def uniform_prob(self) -> float | None:
        """The common edge probability if all edges share one, else ``None``."""
        if self.num_edges == 0:
            return None
        first = self.prob[0]
        return float(first) if np.all(self.prob == first) else None

    def to_records(self) -> dict:
        return {
            "num_arms": self.num_arms,
            "edges": [{"src": s, "dst": d, "prob": p} for s, d, p in self.edges],
        }

    @classmethod
    def from_records(cls, data: dict) -> "ProbGraph":
        try:
            edges = [(e["src"], e["dst"], e["prob"]) for e in data["edges"]]
            return cls(data["num_arms"], edges)
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed graph record: {exc}") from exc

    def __repr__(self) -> str:
        return f"ProbGraph(num_arms={self.num_arms}, edges={list(self.edges)!r})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ProbGraph)
            and self.num_arms == other.num_arms
            and set(self.edges) == set(other.edges)
        )

    __hash__ = None


@dataclass
class ValidationReport:
    unobservable: list[int] = field(default_factory=list)
    bad_probabilities: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.unobservable and not self.bad_probabilities

    def messages(self) -> list[str]:
        out = [f"node {j} unobservable (no incoming edge)" for j in self.unobservable]
        out += [f"edge ({s}, {d}) has probability {p} outside (0, 1]" for s, d, p in self.bad_probabilities]
        return out

    def __bool__(self) -> bool:
        return self.ok


def validate(graph: ProbGraph) -> ValidationReport:
    """Check observability (every arm has an in-edge) and edge probabilities."""
    report = ValidationReport()
    report.unobservable = [j for j in range(graph.num_arms) if not graph.in_neighbors(j)]
    report.bad_probabilities = [
        (s, d, p) for s, d, p in graph.edges if not (0.0 < p <= 1.0) or math.isnan(p)
    ]
    return report


def require_valid(graph: ProbGraph) -> ProbGraph:
    report = validate(graph)
    if not report.ok:
        raise GraphError("; ".join(report.messages()))
    return graph


@dataclass(frozen=True)
class EdgeRealization:
    """The set of live edges ``E_t`` in one round."""

    num_arms: int
    live: frozenset

    @classmethod
    def from_pairs(cls, num_arms: int, pairs: Iterable[tuple[int, int]]) -> "EdgeRealization":
        return cls(num_arms, frozenset((int(i), int(j)) for i, j in pairs))

    def successors(self) -> list[list[int]]:
        succ = [[] for _ in range(self.num_arms)]
        for i, j in sorted(self.live):
            succ[i].append(j)
        return succ


def sample_live_mask(graph: ProbGraph, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask over ``graph.edges``; edge k is live with probability ``prob[k]``."""
    return rng.random(graph.num_edges) < graph.prob


def sample_realization(graph: ProbGraph, rng: np.random.Generator) -> EdgeRealization:
    mask = sample_live_mask(graph, rng)
    pairs = ((graph.edges[k][0], graph.edges[k][1]) for k in np.flatnonzero(mask))
    return EdgeRealization.from_pairs(graph.num_arms, pairs)


def one_step_observed(realization: EdgeRealization, arm: int) -> set[int]:
    """Arms ``j`` with a live edge ``(arm, j)``; the arm itself only via a live self-loop."""
    return {j for i, j in realization.live if i == arm}


def _reach(succ, arm: int) -> set[int]:
    # only walks of length >= 1 count, so the source is not pre-marked
    seen: set[int] = set()
    stack = list(succ[arm])
    while stack:
        j = stack.pop()
        if j not in seen:
            seen.add(j)
            stack.extend(succ[j])
    return seen


def cascade_observed(realization: EdgeRealization, arm: int) -> set[int]:
    """Arms reachable from ``arm`` by a live directed path of length at least one."""
    return _reach(realization.successors(), arm)


def observed_from_mask(graph: ProbGraph, live: np.ndarray, arm: int, cascade: bool) -> list[int]:
    """Fast per-round variant of :func:`one_step_observed` / :func:`cascade_observed`.

    ``live`` is a mask as returned by :func:`sample_live_mask`. The result is
    sorted so that downstream updates are order-deterministic.
    """
    dst = graph.dst
    out_ids = graph.out_edge_ids
    if not cascade:
        return sorted(int(dst[k]) for k in out_ids[arm] if live[k])
    seen: set[int] = set()
    stack = [int(dst[k]) for k in out_ids[arm] if live[k]]
    while stack:
        j = stack.pop()
        if j not in seen:
            seen.add(j)
            stack.extend(int(dst[k]) for k in out_ids[j] if live[k])
    return sorted(seen)


def _adjacency_batch(graph: ProbGraph, live: np.ndarray) -> np.ndarray:
    n = live.shape[0]
    adj = np.zeros((n, graph.num_arms, graph.num_arms), dtype=bool)
    adj[:, graph.src, graph.dst] = live
    return adj


def exact_connection_matrix(graph: ProbGraph, limit: int = DEFAULT_ENUMERATION_LIMIT,
                            chunk_bits: int = 14) -> np.ndarray:
    """Exact path-connection probabilities by enumerating every edge subset.

    Entry ``(i, j)`` is the probability that a realization contains a directed
    path of length >= 1 from ``i`` to ``j``. Cost is ``2**|E|`` closures, so
    graphs with more than ``limit`` edges are refused.
    """
    m = graph.num_edges
    if m > limit:
        raise GraphError(f"graph has {m} edges; exact enumeration is limited to {limit}")
    K = graph.num_arms
    total = np.zeros((K, K))
    if m == 0:
        return _readonly(total)
    prob = graph.prob
    chunk = 1 << min(chunk_bits, m)
    shifts = np.arange(m, dtype=np.int64)
    for start in range(0, 1 << m, chunk):
        codes = np.arange(start, min(start + chunk, 1 << m), dtype=np.int64)
        bits = ((codes[:, None] >> shifts) & 1).astype(bool)
        weight = np.prod(np.where(bits, prob, 1.0 - prob), axis=1)
        reach = _adjacency_batch(graph, bits)
        # Floyd-Warshall style closure, batched over subsets
        for k in range(K):
            reach |= reach[:, :, k, None] & reach[:, None, k, :]
        total += np.einsum("n,nij->ij", weight, reach)
    return _readonly(np.clip(total, 0.0, 1.0))


def estimate_connection_matrix(graph: ProbGraph, samples: int, rng: np.random.Generator,
                               chunk: int = 20000) -> np.ndarray:
    """Monte-Carlo estimate of the path-connection matrix from ``samples`` realizations."""
    if samples < 1:
        raise GraphError("samples must be >= 1")
    K = graph.num_arms
    counts = np.zeros((K, K), dtype=np.int64)
    steps = max(1, math.ceil(math.log2(K))) if K > 1 else 1
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        live = rng.random((n, graph.num_edges)) < graph.prob
        adj = _adjacency_batch(graph, live).astype(np.uint8)
        reach = adj.copy()
        # reach covers walk lengths 1..L; reach | reach@reach covers 1..2L
        for _ in range(steps):
            reach = reach | (np.matmul(reach, reach) > 0).astype(np.uint8)
        counts += reach.sum(axis=0, dtype=np.int64)
        done += n
    return _readonly(counts / samples)


def threshold_matrix(estimate: np.ndarray, eta: float) -> np.ndarray:
    """Zero every entry ``<= eta``; larger entries pass through unchanged."""
    estimate = np.asarray(estimate, dtype=float)
    return _readonly(np.where(estimate > eta, estimate, 0.0))


def default_mc_samples(num_arms: int, eta_min: float, delta: float = 1e-3) -> int:
    """Samples needing ``|P_ij - p'_ij| <= eta_min/2`` for all entries w.p. ``1 - delta`` (Hoeffding)."""
    return math.ceil(2.0 / eta_min**2 * math.log(2.0 * num_arms**2 / delta))


def exploration_nodes(matrix: np.ndarray, ratio: float = 1.0) -> dict[int, float]:
    """Exploration nodes and their minimal exploration probabilities.

    Node ``i`` qualifies for column ``j`` when ``matrix[i, j] >= ratio * max_i' matrix[i', j]``
    (``ratio=1`` is the argmax set; ``ratio=0.5`` the half-max relaxation used with
    estimated path probabilities). Returns ``{i: min qualifying matrix[i, j]}``.
    """
    matrix = np.asarray(matrix, dtype=float)
    out: dict[int, float] = {}
    for j in range(matrix.shape[1]):
        col = matrix[:, j]
        top = col.max()
        if top <= 0.0:
            continue
        for i in np.flatnonzero((col >= ratio * top) & (col > 0.0)):
            i = int(i)
            out[i] = min(out.get(i, math.inf), float(col[i]))
    return dict(sorted(out.items()))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr
