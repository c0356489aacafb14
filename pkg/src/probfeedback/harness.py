"""Experiment configuration, built-in presets, seeded replications and CSV output.

Config files are JSON objects::

    {
      "graph": {"num_arms": 6, "edges": [{"src": 0, "dst": 1, "prob": 0.7}, ...]},
      "reward": {"family": "gaussian", "theta": [0.7, 0.5, ...]},
      "mode": "cascade",                 # or "one-step"
      "policy": "cascade",               # one-step-uniform | one-step-general | cascade | ucb1 | uniform-random
      "horizon": 100000,
      "runs": 10,
      "seed": 0,
      "schedules": {"beta_a": 0.5, "beta_b": 0.5, "eta_min": 0.05, "eta_exp": 0.333333},
      "mc_samples": null,                # null: enough for accuracy eta_min / 2
      "gap_floor": 1e-06,
      "rhs_mode": null,                  # null: policy default
      "explore_const": 16.0,
      "halving": 2.0,
      "checkpoints": {"start": 10, "factor": 1.3, "extra": [50000]},   # or {"points": [...]}
      "output": "results"
    }

Every key except ``graph`` and ``reward`` is optional.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import numpy as np

from . import lp
from .env import CASCADE, GAUSSIAN, MODES, Environment, ModelError, RegretTrace, RewardModel
from .graph import GraphError, ProbGraph, default_mc_samples, estimate_connection_matrix, validate
from .policies import (
    LP_BRANCHES,
    CascadePolicy,
    OneStepGeneralPolicy,
    OneStepUniformPolicy,
    PolicyError,
    PolicyState,
    Schedules,
    UCB1Policy,
    UniformRandomPolicy,
    update_state,
)

log = logging.getLogger(__name__)

POLICIES = ("one-step-uniform", "one-step-general", "cascade", "ucb1", "uniform-random")
CSV_HEADER = "t,regret_mean,regret_std,runs"
ARM_LETTERS = "ABCDEF"

CYCLE6_PROBS = (0.7, 0.4, 0.7, 0.3, 0.9, 0.1)
RANDOM6_EDGES = (
    ("A", "C", 0.3), ("B", "A", 0.2), ("B", "B", 0.2), ("B", "C", 0.4), ("B", "E", 0.5),
    ("C", "B", 0.4), ("C", "E", 0.5), ("D", "F", 0.6), ("D", "A", 0.4), ("D", "C", 0.7),
    ("E", "C", 0.3), ("E", "D", 0.5), ("F", "F", 0.6),
)


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    graph: ProbGraph
    reward: RewardModel
    mode: str = CASCADE
    policy: str = "cascade"
    horizon: int = 100_000
    runs: int = 10
    seed: int = 0
    schedules: Schedules = field(default_factory=Schedules)
    mc_samples: int | None = None
    gap_floor: float = lp.DEFAULT_GAP_FLOOR
    rhs_mode: str | None = None
    explore_const: float = 16.0
    halving: float = 2.0
    checkpoints: dict = field(default_factory=lambda: {"start": 10, "factor": 1.3})
    output: str | None = None

    def validate(self) -> "ExperimentConfig":
        for name in ("horizon", "runs", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.policy == "cascade" and self.mode != CASCADE:
            raise ConfigError("policy 'cascade' requires mode 'cascade'")
        if self.policy == "one-step-uniform" and self.graph.uniform_prob is None:
            raise ConfigError("policy 'one-step-uniform' requires all edge probabilities to be equal")
        if self.rhs_mode is not None and self.rhs_mode not in lp.RHS_MODES:
            raise ConfigError(f"rhs_mode must be one of {lp.RHS_MODES} or null, got {self.rhs_mode!r}")
        if self.mc_samples is not None and (not isinstance(self.mc_samples, int) or self.mc_samples < 1):
            raise ConfigError(f"mc_samples must be a positive integer or null, got {self.mc_samples!r}")
        if not self.gap_floor > 0:
            raise ConfigError(f"gap_floor must be positive, got {self.gap_floor}")
        if not self.explore_const > 0:
            raise ConfigError(f"explore_const must be positive, got {self.explore_const}")
        if not self.halving > 1:
            raise ConfigError(f"halving must exceed 1, got {self.halving}")
        report = validate(self.graph)
        if not report.ok:
            raise ConfigError("graph: " + "; ".join(report.messages()))
        if self.reward.num_arms != self.graph.num_arms:
            raise ConfigError(
                f"reward.theta has {self.reward.num_arms} entries but graph.num_arms is {self.graph.num_arms}")
        checkpoint_grid(self.horizon, self.checkpoints)
        return self

    @property
    def samples(self) -> int:
        if self.mc_samples is not None:
            return self.mc_samples
        return default_mc_samples(self.graph.num_arms, self.schedules.eta_min)

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_records(),
            "reward": {"family": self.reward.family, "theta": list(self.reward.theta)},
            "mode": self.mode,
            "policy": self.policy,
            "horizon": int(self.horizon),
            "runs": int(self.runs),
            "seed": int(self.seed),
            "schedules": dataclasses.asdict(self.schedules),
            "mc_samples": self.mc_samples,
            "gap_floor": self.gap_floor,
            "rhs_mode": self.rhs_mode,
            "explore_const": self.explore_const,
            "halving": self.halving,
            "checkpoints": dict(self.checkpoints),
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("graph", "reward"):
            if key not in data:
                raise ConfigError(f"missing required key {key!r}")
        try:
            data["graph"] = ProbGraph.from_records(data["graph"])
        except GraphError as exc:
            raise ConfigError(f"graph: {exc}") from exc
        try:
            reward = data["reward"]
            data["reward"] = RewardModel(reward.get("family", GAUSSIAN), tuple(reward["theta"]))
        except (ModelError, KeyError, TypeError, AttributeError) as exc:
            raise ConfigError(f"reward: {exc}") from exc
        if "schedules" in data:
            try:
                data["schedules"] = Schedules(**data["schedules"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"schedules: {exc}") from exc
        return cls(**data).validate()

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes).validate()


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def save_config(config: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def checkpoint_grid(horizon: int, layout: dict | None = None) -> list[int]:
    """Rounds at which cumulative regret is recorded; always ends at ``horizon``."""
    layout = layout or {}
    if "points" in layout:
        points = sorted({int(p) for p in layout["points"] if 1 <= int(p) <= horizon})
    else:
        start = int(layout.get("start", 10))
        factor = float(layout.get("factor", 1.3))
        if start < 1 or factor <= 1.0:
            raise ConfigError(f"checkpoints need start >= 1 and factor > 1, got {layout}")
        points = []
        x = float(start)
        while x < horizon:
            points.append(int(round(x)))
            x *= factor
    points = sorted(set(points) | {int(p) for p in layout.get("extra", ()) if 1 <= int(p) <= horizon})
    if not points or points[-1] != horizon:
        points.append(horizon)
    return points


def _arm_index(label) -> int:
    if isinstance(label, str):
        if label.upper() not in ARM_LETTERS or len(label) != 1:
            raise ConfigError(f"unknown arm label {label!r}; expected one of {tuple(ARM_LETTERS)}")
        return ARM_LETTERS.index(label.upper())
    if not 0 <= int(label) < 6:
        raise ConfigError(f"arm index {label} outside [0, 6)")
    return int(label)


def preset(name: str, delta: float = 0.2, best="A", **overrides) -> ExperimentConfig:
    """The two 6-node experiment graphs, cascade feedback, Gaussian unit-variance rewards."""
    if name == "cycle6":
        edges = [(i, (i + 1) % 6, p) for i, p in enumerate(CYCLE6_PROBS)]
        theta = (0.5 + delta,) + (0.5,) * 5
    elif name == "random6":
        edges = [(ARM_LETTERS.index(s), ARM_LETTERS.index(d), p) for s, d, p in RANDOM6_EDGES]
        theta = [0.5] * 6
        theta[_arm_index(best)] = 0.6
    else:
        raise ConfigError(f"unknown preset {name!r}; expected 'cycle6' or 'random6'")
    base = dict(graph=ProbGraph(6, edges), reward=RewardModel(GAUSSIAN, tuple(theta)),
                mode=CASCADE, policy="cascade", runs=10)
    base.update(overrides)
    return ExperimentConfig(**base).validate()


def make_policy(config: ExperimentConfig, mc_rng: np.random.Generator, rng: np.random.Generator):
    """Instantiate the configured policy; the cascade policy estimates path probabilities first."""
    options = dict(gap_floor=config.gap_floor, schedules=config.schedules, rhs_mode=config.rhs_mode,
                   explore_const=config.explore_const, halving=config.halving)
    family, graph = config.reward.family, config.graph
    if config.policy == "one-step-uniform":
        return OneStepUniformPolicy(graph, family, **options)
    if config.policy == "one-step-general":
        return OneStepGeneralPolicy(graph, family, **options)
    if config.policy == "cascade":
        connection = estimate_connection_matrix(graph, config.samples, mc_rng)
        return CascadePolicy(graph, connection, family, **options)
    if config.policy == "ucb1":
        return UCB1Policy()
    return UniformRandomPolicy(graph.num_arms, rng)


def run_replication(config: ExperimentConfig, index: int, instrument: bool = False) -> RegretTrace:
    """One seeded replication. ``instrument`` checks state invariants every round."""
    seed = config.seed + index
    mc_seq, env_seq, policy_seq = np.random.SeedSequence(seed).spawn(3)
    policy = make_policy(config, np.random.default_rng(mc_seq), np.random.default_rng(policy_seq))
    env = Environment(config.graph, config.reward, config.mode, np.random.default_rng(env_seq))
    state = PolicyState(config.graph.num_arms)
    grid = checkpoint_grid(config.horizon, config.checkpoints)
    counts: Counter = Counter()
    last: dict[str, int] = {}
    checkpoints = []
    k = 0
    for t in range(1, config.horizon + 1):
        decision = policy.select(state)
        event, _ = env.step(decision.arm)
        if instrument:
            prev_e = state.N_e
        update_state(state, event, decision)
        counts[decision.branch] += 1
        last[decision.branch] = t
        if instrument:
            _check_round(state, decision, prev_e, policy.branches)
        if t == grid[k]:
            checkpoints.append((t, env.regret))
            k += 1
    return RegretTrace(config.horizon, checkpoints, seed, config.digest(), dict(sorted(counts.items())),
                       dict(sorted(last.items())))


def _check_round(state: PolicyState, decision, prev_e: int, branches) -> None:
    problems = state.violations()
    if decision.branch not in branches:
        problems.append(f"unexpected branch {decision.branch!r}")
    explored = state.N_e - prev_e
    if decision.branch in LP_BRANCHES and explored != (decision.branch in ("E", "F")):
        problems.append(f"N_e changed by {explored} on branch {decision.branch}")
    if problems:
        raise PolicyError(f"round {state.t}: " + "; ".join(problems))


def _replication_job(args):
    config, index, instrument = args
    return run_replication(config, index, instrument)


@dataclass
class AggregateTrace:
    checkpoints: list[tuple[int, float, float, int]]
    seeds: list[int]
    branch_counts: list[dict[str, int]]
    config_digest: str
    traces: list[RegretTrace] = field(default_factory=list, repr=False)

    def mean_at(self, t: int) -> float:
        for row in self.checkpoints:
            if row[0] == t:
                return row[1]
        raise KeyError(t)

    @property
    def final_mean(self) -> float:
        return self.checkpoints[-1][1]

    def summary(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "seeds": self.seeds,
            "final_regret_mean": self.final_mean,
            "branch_counts": self.branch_counts,
            "branch_last_round": [tr.branch_last for tr in self.traces],
        }


def aggregate(traces: list[RegretTrace], digest: str = "") -> AggregateTrace:
    values = np.array([tr.values() for tr in traces])
    runs = len(traces)
    mean = values.mean(axis=0)
    std = values.std(axis=0, ddof=1) if runs > 1 else np.zeros(values.shape[1])
    rows = [(t, float(m), float(s), runs) for (t, _), m, s in zip(traces[0].checkpoints, mean, std)]
    return AggregateTrace(rows, [tr.seed for tr in traces], [tr.branch_counts for tr in traces],
                          digest, list(traces))


def run_experiment(config: ExperimentConfig, workers: int = 1, instrument: bool = False) -> AggregateTrace:
    """Run ``config.runs`` replications with seeds ``seed, seed+1, ...`` and aggregate them."""
    config.validate()
    jobs = [(config, r, instrument) for r in range(config.runs)]
    traces = []
    if workers > 1 and config.runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_replication_job, job) for job in jobs]
            for r, fut in enumerate(futures):
                try:
                    traces.append(fut.result())
                except Exception as exc:
                    raise ExperimentError(f"run {r} (seed {config.seed + r}) failed: {exc}") from exc
    else:
        for job in jobs:
            try:
                traces.append(_replication_job(job))
                log.info("run %d (seed %d) done", job[1], config.seed + job[1])
            except Exception as exc:
                raise ExperimentError(f"run {job[1]} (seed {config.seed + job[1]}) failed: {exc}") from exc
    return aggregate(traces, config.digest())


def format_sig6(x: float) -> str:
    """Six significant digits in plain decimal notation (no exponent)."""
    text = format(float(x), "#.6g")
    if "e" in text:
        text = format(Decimal(format(float(x), ".5e")), "f")
    return text


def write_csv(trace: AggregateTrace, path) -> Path:
    path = Path(path)
    lines = [CSV_HEADER]
    for t, mean, std, runs in trace.checkpoints:
        lines.append(f"{int(t)},{format_sig6(mean)},{format_sig6(std)},{int(runs)}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path) -> list[tuple[int, float, float, int]]:
    text = Path(path).read_text(encoding="utf-8")
    rows = text.split("\n")
    if rows[0] != CSV_HEADER:
        raise ValueError(f"unexpected header {rows[0]!r}")
    out = []
    for line in rows[1:]:
        if line:
            t, mean, std, runs = line.split(",")
            out.append((int(t), float(mean), float(std), int(runs)))
    return out


def write_outputs(config: ExperimentConfig, trace: AggregateTrace, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "config": save_config(config, out / "config.json"),
        "regret": write_csv(trace, out / "regret.csv"),
    }
    summary = out / "summary.json"
    summary.write_text(json.dumps(trace.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["summary"] = summary
    return paths
