import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import bernoulli_kl
from probfeedback.env import (
    BERNOULLI,
    CASCADE,
    GAUSSIAN,
    ONE_STEP,
    Environment,
    ModelError,
    RewardModel,
    env_step,
    expected_uniform_regret,
    kl,
    sample_rewards,
)
from probfeedback.graph import ProbGraph

unit = st.floats(0.001, 0.999)


class TestRewardModel:
    def test_rejects_bernoulli_outside_unit_interval(self):
        with pytest.raises(ModelError):
            RewardModel(BERNOULLI, (0.5, 1.0))

    def test_rejects_unknown_family(self):
        with pytest.raises(ModelError, match="family"):
            RewardModel("poisson", (1.0,))

    def test_rejects_non_finite(self):
        with pytest.raises(ModelError):
            RewardModel(GAUSSIAN, (0.5, math.inf))

    def test_gaps_and_best(self):
        m = RewardModel(GAUSSIAN, (0.5, 0.7, 0.6))
        assert m.best_arm == 1
        np.testing.assert_allclose(m.gaps, [0.2, 0.0, 0.1])


class TestSampleRewards:
    def test_nearly_certain_bernoulli(self, rng):
        m = RewardModel(BERNOULLI, (1 - 1e-9,) * 4)
        assert all(np.all(sample_rewards(m, rng) == 1.0) for _ in range(100))

    def test_gaussian_mean(self):
        rng = np.random.default_rng(2)
        m = RewardModel(GAUSSIAN, (0.5,) * 1000)
        draws = np.array([sample_rewards(m, rng) for _ in range(1000)])
        assert abs(draws.mean() - 0.5) <= 0.004
        assert abs(draws.std() - 1.0) < 0.005

    def test_bernoulli_values_and_mean(self, rng):
        m = RewardModel(BERNOULLI, (0.3, 0.8))
        draws = np.array([sample_rewards(m, rng) for _ in range(20_000)])
        assert set(np.unique(draws)) <= {0.0, 1.0}
        np.testing.assert_allclose(draws.mean(axis=0), [0.3, 0.8], atol=0.015)

    def test_seeded(self):
        m = RewardModel(GAUSSIAN, (0.1, 0.2))
        a = sample_rewards(m, np.random.default_rng(9))
        b = sample_rewards(m, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)


class TestKL:
    def test_gaussian(self):
        assert kl(GAUSSIAN, 0.5, 0.7) == pytest.approx(0.02, abs=1e-15)

    @pytest.mark.parametrize("family", [GAUSSIAN, BERNOULLI])
    def test_identity_zero(self, family):
        assert kl(family, 0.3, 0.3) == 0.0

    def test_bernoulli_closed_form(self):
        assert kl(BERNOULLI, 0.5, 0.6) == pytest.approx(0.0204110, abs=1e-7)
        assert kl(BERNOULLI, 0.5, 0.6) == pytest.approx(bernoulli_kl(0.5, 0.6), rel=1e-14)

    def test_bernoulli_clamped_endpoints(self):
        assert math.isfinite(kl(BERNOULLI, 0.0, 0.5))
        assert math.isfinite(kl(BERNOULLI, 0.5, 1.0))

    @pytest.mark.parametrize("bad", [math.nan, math.inf])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(ModelError):
            kl(GAUSSIAN, bad, 0.1)

    @given(unit, unit)
    def test_bernoulli_positive_off_diagonal(self, a, b):
        value = kl(BERNOULLI, a, b)
        assert value >= 0.0
        if a != b:
            assert value > 0.0


class TestEnvStep:
    def test_best_arm_no_regret(self, cycle6, rng):
        _, inc = env_step(cycle6.graph, cycle6.reward, CASCADE, 0, rng)
        assert inc == 0.0

    @pytest.mark.parametrize("arm", range(1, 6))
    def test_suboptimal_increment(self, cycle6, rng, arm):
        _, inc = env_step(cycle6.graph, cycle6.reward, ONE_STEP, arm, rng)
        assert inc == pytest.approx(0.2)

    def test_full_one_step_sees_out_neighbors(self, rng):
        g = ProbGraph(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 0, 1.0), (2, 2, 1.0)])
        m = RewardModel(GAUSSIAN, (0.0, 0.0, 0.0))
        event, _ = env_step(g, m, ONE_STEP, 0, rng, t=4)
        assert [j for j, _ in event.observations] == [1, 2]
        assert event.t == 4 and event.arm == 0

    def test_cascade_full_graph_sees_closure(self, rng):
        g = ProbGraph(3, [(0, 1, 1.0), (1, 2, 1.0)])
        m = RewardModel(GAUSSIAN, (0.0, 0.0, 0.0))
        event, _ = env_step(g, m, CASCADE, 0, rng)
        assert [j for j, _ in event.observations] == [1, 2]

    def test_unknown_mode(self, cycle6, rng):
        with pytest.raises(ModelError, match="mode"):
            env_step(cycle6.graph, cycle6.reward, "broadcast", 0, rng)


class TestEnvironment:
    def test_matches_env_step_stream(self, random6):
        a = Environment(random6.graph, random6.reward, CASCADE, np.random.default_rng(4))
        rng = np.random.default_rng(4)
        for t, arm in enumerate([0, 3, 5, 1, 2, 2, 4], start=1):
            ev_a, inc_a = a.step(arm)
            ev_b, inc_b = env_step(random6.graph, random6.reward, CASCADE, arm, rng, t=t)
            assert ev_a == ev_b and inc_a == inc_b

    def test_regret_monotone_with_exact_increments(self, cycle6, rng):
        env = Environment(cycle6.graph, cycle6.reward, CASCADE, rng)
        gaps = set(np.round(cycle6.reward.gaps, 12))
        last = 0.0
        for _ in range(500):
            _, inc = env.step(int(rng.integers(6)))
            assert round(inc, 12) in gaps
            assert env.regret >= last
            last = env.regret
        assert env.regret <= env.t * cycle6.reward.gaps.max() + 1e-9

    def test_deterministic_graph_counts(self):
        g = ProbGraph(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0), (0, 0, 1.0)])
        env = Environment(g, RewardModel(GAUSSIAN, (0, 0, 0)), ONE_STEP, np.random.default_rng(0))
        counts = np.zeros(3)
        plays = [0, 1, 2, 0, 0, 2]
        for arm in plays:
            event, _ = env.step(arm)
            for j, _ in event.observations:
                counts[j] += 1
        np.testing.assert_array_equal(counts, [2 + 3, 3, 1])

    def test_observation_frequency_per_edge(self, random6):
        env = Environment(random6.graph, random6.reward, ONE_STEP, np.random.default_rng(6))
        N = 10_000
        counts = np.zeros(6)
        for _ in range(N):
            event, _ = env.step(1)
            for j, _ in event.observations:
                counts[j] += 1
        p = random6.graph.weights[1]
        band = 3 * np.sqrt(p * (1 - p) / N)
        assert np.all(np.abs(counts / N - p) <= band)

    def test_arm_count_mismatch(self, cycle6, rng):
        with pytest.raises(ModelError, match="arms"):
            Environment(cycle6.graph, RewardModel(GAUSSIAN, (0.1, 0.2)), CASCADE, rng)


def test_expected_uniform_regret(cycle6):
    assert expected_uniform_regret(cycle6.reward, 10_000) == pytest.approx(10_000 * 5 / 6 * 0.2)
