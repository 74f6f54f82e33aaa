import itertools

import numpy as np
import pytest

from nmarl import netgraph, oracle
from nmarl.errors import SpaceTooLarge
from nmarl.model import FactoredNmarlModel, InitialDistribution
from nmarl.policy import CoupledSoftmaxPolicy, MixingSpec

from support import (
    constant_reward_model,
    line_graph,
    random_table_model,
    zero_reward_model,
)


@pytest.fixture
def line3():
    g = line_graph(3)
    m = random_table_model(g, np.random.default_rng(17))
    pol = CoupledSoftmaxPolicy(g, 2, 2, MixingSpec(kappa_p=1))
    theta = np.random.default_rng(18).uniform(-1, 1, size=(3, 4))
    return m, pol, theta


def uniform_tables(n, n_states, n_actions):
    return np.full((n, n_states, n_actions), 1.0 / n_actions)


class TestExactObjective:
    def test_constant_reward_geometric_series(self):
        m = constant_reward_model(line_graph(2), c=-0.5, gamma=0.9)
        j = oracle.exact_objective(m, uniform_tables(2, 2, 2))
        assert j == pytest.approx(-5.0, abs=1e-8)

    def test_two_state_alternating_chain(self):
        # deterministic swap chain, reward 1 in state 0 and 0 in state 1
        g = netgraph.build_graph(1, [])
        kernel = np.zeros((2, 1, 2))
        kernel[0, 0, 1] = 1.0
        kernel[1, 0, 0] = 1.0
        m = FactoredNmarlModel(
            g, [[0, 1]], [[0]], [kernel],
            [lambda s, a: 1.0 if s[0] == 0 else 0.0],
            InitialDistribution.fixed([0]), 0.9,
        )
        j = oracle.exact_objective(m, uniform_tables(1, 2, 1))
        assert j == pytest.approx(1.0 / (1.0 - 0.81), abs=1e-8)

    def test_zero_rewards(self):
        m = zero_reward_model(line_graph(3))
        assert oracle.exact_objective(m, uniform_tables(3, 2, 2)) == 0.0

    def test_space_guard(self):
        with pytest.raises(SpaceTooLarge):
            oracle.enumerate_space([10] * 7)


class TestDecomposition:
    def test_global_equals_mean_of_local(self, line3):
        m, pol, theta = line3
        tables = pol.prob_tables(theta)
        worst = 0.0
        for s in itertools.product(range(2), repeat=3):
            for a in itertools.product(range(2), repeat=3):
                gq = oracle.global_q_value(m, tables, s, a)
                total = 0.0
                for i in range(3):
                    mem = m.reward_members[i]
                    total += oracle.local_q_value(
                        m, tables, i, [s[j] for j in mem], [a[j] for j in mem]
                    )
                worst = max(worst, abs(gq - total / 3))
        assert worst <= 1e-6

    def test_single_agent_local_equals_global(self):
        g = netgraph.build_graph(1, [])
        m = random_table_model(g, np.random.default_rng(2))
        tables = uniform_tables(1, 2, 2)
        for s in range(2):
            for a in range(2):
                assert oracle.local_q_value(m, tables, 0, (s,), (a,)) == pytest.approx(
                    oracle.global_q_value(m, tables, (s,), (a,)), abs=1e-9
                )

    def test_neighbors_averaged_matches_local_sum(self, line3):
        m, pol, theta = line3
        tables = pol.prob_tables(theta)
        i = 0
        outer = netgraph.khop(m.graph, i, 1 + 2 * m.kappa_r).members
        inner = netgraph.khop(m.graph, i, 1 + m.kappa_r).members
        for s in itertools.product(range(2), repeat=3):
            for a in itertools.product(range(2), repeat=3):
                s_o = [s[j] for j in outer]
                a_o = [a[j] for j in outer]
                left = oracle.neighbors_averaged_q(m, tables, i, s_o, a_o, kappa_p=1)
                right = sum(
                    oracle.local_q_value(
                        m, tables, j,
                        [s[k] for k in m.reward_members[j]],
                        [a[k] for k in m.reward_members[j]],
                    )
                    for j in inner
                ) / m.n
                assert left == pytest.approx(right, abs=1e-6)

    def test_averaged_q_ignores_far_agents(self):
        # on a 5-line with kappa_p = kappa_r = 1, agent 0's averaged value
        # reads agents 0..3 only; agent 4 must not matter
        g = line_graph(5)
        m = random_table_model(g, np.random.default_rng(31))
        tables = uniform_tables(5, 2, 2)
        outer = netgraph.khop(g, 0, 3).members
        assert outer == (0, 1, 2, 3)
        val = oracle.neighbors_averaged_q(m, tables, 0, (0, 1, 0, 1), (1, 0, 1, 0), 1)
        assert np.isfinite(val)


class TestVisitation:
    def test_absorbing_point_mass(self):
        g = netgraph.build_graph(1, [])
        kernel = np.zeros((2, 1, 2))
        kernel[:, 0, 0] = 1.0  # everything falls into state 0
        m = FactoredNmarlModel(
            g, [[0, 1]], [[0]], [kernel], [lambda s, a: 0.0],
            InitialDistribution.fixed([0]), 0.9,
        )
        tab, space = oracle.discounted_visitation(m, uniform_tables(1, 2, 1))
        np.testing.assert_allclose(tab, [1.0, 0.0], atol=1e-9)

    def test_tiny_gamma_recovers_rho(self):
        g = line_graph(2)
        m = random_table_model(g, np.random.default_rng(3), gamma=1e-6)
        tab, space = oracle.discounted_visitation(m, uniform_tables(2, 2, 2))
        expect = [m.rho.prob(s) for s in space.points]
        np.testing.assert_allclose(tab, expect, atol=1e-5)

    def test_symmetric_chain_uniform(self):
        g = netgraph.build_graph(1, [])
        m = FactoredNmarlModel(
            g, [[0, 1]], [[0]], [np.full((2, 1, 2), 0.5)], [lambda s, a: 0.0],
            InitialDistribution.product([np.array([0.5, 0.5])]), 0.9,
        )
        tab, _ = oracle.discounted_visitation(m, uniform_tables(1, 2, 1))
        np.testing.assert_allclose(tab, 0.5, atol=1e-9)

    def test_normalized(self, line3):
        m, pol, theta = line3
        tab, _ = oracle.discounted_visitation(m, pol.prob_tables(theta))
        assert np.all(tab >= 0)
        assert tab.sum() == pytest.approx(1.0, abs=1e-8)


class TestGradients:
    def test_zero_rewards_zero_gradient(self):
        g = line_graph(3)
        m = zero_reward_model(g)
        pol = CoupledSoftmaxPolicy(g, 2, 2, MixingSpec(kappa_p=1))
        theta = np.random.default_rng(0).normal(size=(3, 4))
        assert np.all(oracle.gradient_via_local_q(m, pol, theta, 1) == 0.0)
        assert np.all(oracle.gradient_via_averaged_q(m, pol, theta, 1) == 0.0)

    def test_two_forms_agree(self, line3):
        m, pol, _ = line3
        rng = np.random.default_rng(100)
        for _ in range(3):
            theta = rng.uniform(-1, 1, size=(3, 4))
            for i in range(3):
                g1 = oracle.gradient_via_local_q(m, pol, theta, i)
                g2 = oracle.gradient_via_averaged_q(m, pol, theta, i)
                np.testing.assert_allclose(g1, g2, atol=1e-6)

    def test_two_forms_agree_at_estimates(self, line3):
        m, pol, _ = line3
        est = np.random.default_rng(5).uniform(-1, 1, size=(3, 3, 4))
        for i in range(3):
            g1 = oracle.gradient_via_local_q(m, pol, est, i)
            g2 = oracle.gradient_via_averaged_q(m, pol, est, i)
            np.testing.assert_allclose(g1, g2, atol=1e-6)

    def test_matches_finite_differences(self, line3):
        m, pol, theta = line3
        for i in range(3):
            exact = oracle.gradient_via_local_q(m, pol, theta, i)
            fd = oracle.finite_difference_gradient(m, pol, theta, i, h=1e-5)
            np.testing.assert_allclose(fd, exact, rtol=1e-4, atol=1e-8)

    def test_far_value_terms_cancel(self):
        # 5-line, kappa_p = kappa_r = 1: agents beyond 2 hops contribute value
        # terms whose expectation vanishes under consistent parameters
        g = line_graph(5)
        m = random_table_model(g, np.random.default_rng(41))
        pol = CoupledSoftmaxPolicy(g, 2, 2, MixingSpec(kappa_p=1))
        theta = np.random.default_rng(42).uniform(-1, 1, size=(5, 4))
        truncated = oracle.gradient_via_local_q(m, pol, theta, 0)
        full = oracle.gradient_via_local_q(m, pol, theta, 0, full_sum=True)
        np.testing.assert_allclose(truncated, full, atol=1e-6)


class TestCentralDifference:
    def test_quadratic_sanity(self):
        x = np.array([1.0, -2.0, 0.5])
        grad = oracle.central_difference(lambda v: float(v @ v), x, h=1e-5)
        np.testing.assert_allclose(grad, 2 * x, atol=1e-9)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            oracle.central_difference(lambda v: 0.0, np.zeros(2), h=0.0)
