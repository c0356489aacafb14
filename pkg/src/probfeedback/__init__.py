"""Stochastic bandits whose feedback graph edges fire independently at random."""

from .bounds import BoundReport, lower_bound_cascade, lower_bound_one_step
from .env import (BERNOULLI, CASCADE, GAUSSIAN, ONE_STEP, Environment, FeedbackEvent, RewardModel,
                  env_step, kl)
from .graph import (EdgeRealization, GraphError, ProbGraph, cascade_observed, estimate_connection_matrix,
                    exact_connection_matrix, one_step_observed, threshold_matrix, validate)
from .harness import (AggregateTrace, ConfigError, ExperimentConfig, load_config, preset, run_experiment,
                      write_csv)
from .lp import LPInfeasible, LPInstance, LPSolution, build_constraints, is_member, solve
from .policies import (CascadePolicy, Decision, OneStepGeneralPolicy, OneStepUniformPolicy, PolicyState,
                       Schedules, UCB1Policy, UniformRandomPolicy, update_state)

__version__ = "0.1.0"
