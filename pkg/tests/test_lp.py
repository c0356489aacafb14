import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from oracles import bernoulli_kl, covering_lp_by_vertices
from probfeedback import lp
from probfeedback.env import BERNOULLI, GAUSSIAN
from probfeedback.graph import ProbGraph, exact_connection_matrix


def bandit_instance():
    return lp.build_constraints(np.eye(3), (0.9, 0.7, 0.5), GAUSSIAN, lp.INVERSE_KL)


@st.composite
def instances(draw, max_arms=6, density=0.6):
    """Random covering LPs with positive entries and every column covered."""
    K = draw(st.integers(2, max_arms))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    P = np.where(rng.random((K, K)) < density, rng.uniform(0.05, 1.0, (K, K)), 0.0)
    for j in np.flatnonzero(~(P > 0).any(axis=0)):
        P[rng.integers(K), j] = rng.uniform(0.05, 1.0)
    b = rng.uniform(0.5, 100.0, K)
    delta = rng.uniform(0.0, 1.0, K)
    delta[rng.integers(K)] = 0.0
    return lp.LPInstance(P, b, delta, int(np.argmin(delta)))


def scipy_value(inst):
    res = linprog(inst.delta, A_ub=-inst.P.T, b_ub=-inst.b, bounds=[(0, None)] * inst.num_arms,
                  method="highs")
    assert res.status == 0
    return res.fun


class TestBuildConstraints:
    def test_bandit_rhs_and_costs(self):
        inst = bandit_instance()
        np.testing.assert_array_equal(inst.P, np.eye(3))
        np.testing.assert_allclose(inst.b, [50, 50, 12.5])
        np.testing.assert_allclose(inst.delta, [0, 0.2, 0.4])
        assert inst.best == 0

    def test_inverse_gap_squared(self):
        inst = lp.build_constraints(np.eye(3), (0.9, 0.7, 0.5), GAUSSIAN, lp.INVERSE_GAP_SQUARED)
        np.testing.assert_allclose(inst.b, [25, 25, 6.25])

    def test_bernoulli_inverse_kl(self):
        inst = lp.build_constraints(np.eye(3), (0.6, 0.5, 0.3), BERNOULLI, lp.INVERSE_KL)
        expected = [1 / bernoulli_kl(0.5, 0.6), 1 / bernoulli_kl(0.5, 0.6), 1 / bernoulli_kl(0.3, 0.6)]
        np.testing.assert_allclose(inst.b, expected, rtol=1e-12)

    @pytest.mark.parametrize("family", [GAUSSIAN, BERNOULLI])
    def test_ties_clamped_finite(self, family):
        inst = lp.build_constraints(np.eye(4), (0.5,) * 4, family, lp.INVERSE_KL)
        assert np.all(np.isfinite(inst.b)) and np.all(inst.b > 0)
        assert inst.best == 0

    def test_cycle6_one_step_matrix(self, cycle6):
        inst = lp.build_one_step_constraints(cycle6.graph, cycle6.reward.theta, GAUSSIAN)
        assert np.count_nonzero(inst.P) == 6
        np.testing.assert_allclose(np.sort(inst.P[inst.P > 0]), np.sort([0.7, 0.4, 0.7, 0.3, 0.9, 0.1]))

    def test_cascade_identity_is_bandit(self):
        inst = lp.build_cascade_constraints(np.eye(3), (0.9, 0.7, 0.5), GAUSSIAN, lp.INVERSE_KL)
        assert lp.solve(inst).value == pytest.approx(15.0, abs=1e-9)

    def test_cycle6_exact_columns_dense(self, cycle6):
        P = exact_connection_matrix(cycle6.graph)
        inst = lp.build_cascade_constraints(P, cycle6.reward.theta, GAUSSIAN)
        assert np.all((inst.P > 0).sum(axis=0) == 6)

    def test_shape_mismatch(self):
        with pytest.raises(lp.LPError, match="shape"):
            lp.build_constraints(np.eye(2), (0.1, 0.2, 0.3), GAUSSIAN, lp.INVERSE_KL)

    def test_unknown_mode(self):
        with pytest.raises(lp.LPError, match="rhs mode"):
            lp.build_constraints(np.eye(2), (0.1, 0.2), GAUSSIAN, "inverse-gap")


class TestMembership:
    def test_zero_vector(self):
        assert not lp.is_member(bandit_instance(), np.zeros(3))

    def test_bandit_examples(self):
        inst = bandit_instance()
        assert lp.is_member(inst, [50, 50, 12.5])
        assert not lp.is_member(inst, [50, 49.9, 12.5])

    def test_scaled_uniform_vector(self):
        P = np.array([[1.0, 0.2, 0.0], [0.0, 1.0, 0.5], [0.3, 0.0, 1.0]])
        inst = lp.LPInstance(P, np.array([3.0, 7.0, 2.0]), np.zeros(3), 0)
        c = np.full(3, inst.b.max() / P.sum(axis=0).min())
        assert lp.is_member(inst, c)

    def test_infinite_rhs_never_member(self):
        inst = lp.LPInstance(np.eye(2), np.array([1.0, np.inf]), np.zeros(2), 0)
        assert not lp.is_member(inst, [1e300, 1e300])


class TestSolve:
    def test_bandit(self):
        sol = lp.solve(bandit_instance())
        assert sol.value == pytest.approx(15.0, abs=1e-9)
        np.testing.assert_allclose(sol.c, [50, 50, 12.5])

    def test_best_arm_sees_everything(self):
        P = np.eye(3)
        P[0, :] = 1.0
        inst = lp.build_constraints(P, (0.9, 0.7, 0.5), GAUSSIAN, lp.INVERSE_KL)
        sol = lp.solve(inst)
        assert sol.value == 0.0
        np.testing.assert_allclose(sol.c[1:], 0.0)
        assert covering_lp_by_vertices(inst.P, inst.b, inst.delta)[0] == pytest.approx(0.0, abs=1e-9)

    def test_cycle6_one_step_against_oracle(self, cycle6):
        inst = lp.build_one_step_constraints(cycle6.graph, cycle6.reward.theta, GAUSSIAN)
        oracle, _ = covering_lp_by_vertices(inst.P, inst.b, inst.delta)
        assert lp.solve(inst).value == pytest.approx(oracle, rel=1e-10)

    def test_zero_column_infeasible(self):
        P = np.array([[1.0, 0.0], [0.5, 0.0]])
        with pytest.raises(lp.LPInfeasible) as err:
            lp.solve(lp.LPInstance(P, np.ones(2), np.array([0.0, 1.0]), 0))
        assert err.value.column == 1

    def test_rejects_negative_costs(self):
        with pytest.raises(lp.LPError, match="costs"):
            lp.solve(lp.LPInstance(np.eye(2), np.ones(2), np.array([0.0, -1.0]), 0))

    @pytest.mark.parametrize("lam", [1e-3, 0.5, 7.0, 1e4])
    def test_scaling_b(self, lam):
        inst = bandit_instance()
        scaled = lp.LPInstance(inst.P, lam * inst.b, inst.delta, inst.best)
        assert lp.solve(scaled).value == pytest.approx(lam * 15.0, rel=1e-12)

    def test_optimal_value_helper(self):
        assert lp.optimal_value(bandit_instance()) == pytest.approx(15.0)


class TestSolveProperties:
    @settings(max_examples=150, deadline=None)
    @given(instances())
    def test_output_feasible(self, inst):
        assert lp.is_member(inst, lp.solve(inst).c)

    @settings(max_examples=150, deadline=None)
    @given(instances(), st.data())
    def test_matches_highs(self, inst, data):
        value = lp.solve(inst).value
        assert value == pytest.approx(scipy_value(inst), rel=1e-8, abs=1e-8)

    @settings(max_examples=80, deadline=None)
    @given(instances(max_arms=4))
    def test_matches_vertex_enumeration(self, inst):
        oracle, _ = covering_lp_by_vertices(inst.P, inst.b, inst.delta)
        assert abs(lp.solve(inst).value - oracle) <= 1e-8 * max(1.0, oracle)

    @settings(max_examples=100, deadline=None)
    @given(instances(), st.data())
    def test_raising_a_coefficient_never_hurts(self, inst, data):
        i, j = data.draw(st.sampled_from([tuple(x) for x in np.argwhere(inst.P > 0)]))
        eps = data.draw(st.floats(1e-6, 0.2))
        P = inst.P.copy()
        P[i, j] += eps
        raised = lp.LPInstance(P, inst.b, inst.delta, inst.best)
        base = lp.solve(inst).value
        assert lp.solve(raised).value <= base + 1e-9 * max(1.0, base)

    @settings(max_examples=100, deadline=None)
    @given(instances(), st.floats(1e-3, 1e3))
    def test_homogeneous_in_b(self, inst, lam):
        scaled = lp.LPInstance(inst.P, lam * inst.b, inst.delta, inst.best)
        base = lp.solve(inst).value
        assert abs(lp.solve(scaled).value - lam * base) <= 1e-8 * max(1.0, lam * base)


class TestWarmStart:
    def test_agrees_with_cold_solves(self):
        rng = np.random.default_rng(0)
        P = np.where(rng.random((6, 6)) < 0.5, rng.uniform(0.1, 1.0, (6, 6)), 0.0)
        np.fill_diagonal(P, 0.3)
        warm = lp.WarmStart()
        for _ in range(400):
            theta = 0.5 + 0.05 * rng.standard_normal(6)
            inst = lp.build_constraints(P, theta, GAUSSIAN, lp.INVERSE_KL)
            hot, cold = lp.solve(inst, warm), lp.solve(inst)
            assert hot.value == pytest.approx(cold.value, rel=1e-9)
            assert lp.is_member(inst, hot.c)
        assert warm.hits > 0

    def test_new_matrix_resets(self):
        warm = lp.WarmStart()
        lp.solve(bandit_instance(), warm)
        P = np.eye(3)
        P[0] = 1.0
        inst = lp.build_constraints(P, (0.9, 0.7, 0.5), GAUSSIAN, lp.INVERSE_KL)
        assert lp.solve(inst, warm).value == 0.0

    def test_zero_columns_helper(self):
        assert lp.zero_columns(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 2.0]])) == [1]


class TestOneStepBuilderGraph:
    def test_uses_direct_weights(self):
        g = ProbGraph(2, [(0, 1, 0.25), (1, 0, 0.5)])
        inst = lp.build_one_step_constraints(g, (0.6, 0.5), GAUSSIAN)
        np.testing.assert_array_equal(inst.P, [[0, 0.25], [0.5, 0]])
