from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmarl import netgraph
from nmarl.errors import DisconnectedGraph, IndexOutOfRange

from support import line_graph


def bfs_distances(g: netgraph.AgentGraph, source: int) -> dict[int, int]:
    """Independent BFS oracle used to cross-check khop."""
    dist = {source: 0}
    frontier = deque([source])
    while frontier:
        v = frontier.popleft()
        for u in g.neighbors[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                frontier.append(u)
    return dist


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(min_value=2, max_value=8))
    # random spanning tree keeps it connected, then optional extra edges
    edges = set()
    for v in range(2, n + 1):
        u = draw(st.integers(min_value=1, max_value=v - 1))
        edges.add((u, v))
    extras = draw(st.lists(st.tuples(st.integers(1, n), st.integers(1, n)), max_size=6))
    for a, b in extras:
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return netgraph.build_graph(n, sorted(edges))


class TestBuildGraph:
    def test_smallest_connected_graph(self):
        g = netgraph.build_graph(2, [(1, 2)])
        assert g.neighbors[0] == (0, 1)
        assert g.neighbors[1] == (0, 1)

    def test_isolated_node_rejected(self):
        with pytest.raises(DisconnectedGraph):
            netgraph.build_graph(3, [(1, 2)])

    def test_bad_ids_rejected(self):
        with pytest.raises(IndexOutOfRange):
            netgraph.build_graph(3, [(1, 4)])
        with pytest.raises(IndexOutOfRange):
            netgraph.build_graph(3, [(0, 1)])
        with pytest.raises(IndexOutOfRange):
            netgraph.build_graph(3, [(2, 2)])

    def test_duplicate_edges_tolerated(self):
        g = netgraph.build_graph(3, [(1, 2), (2, 1), (2, 3), (2, 3)])
        assert g.edges == ((0, 1), (1, 2))

    def test_ring_diameter_five(self):
        g = netgraph.ring_graph(10)
        assert max(bfs_distances(g, 0).values()) == 5
        assert len(netgraph.khop(g, 0, 4).members) < 10
        assert netgraph.khop(g, 0, 5).members == tuple(range(10))

    def test_json_round_trip(self):
        g = netgraph.ring_graph(6)
        assert netgraph.graph_from_json(g.to_json()) == g


class TestWeightMatrix:
    def test_two_agents_half_half(self):
        w = netgraph.weight_matrix(netgraph.build_graph(2, [(1, 2)]))
        assert np.allclose(w, 0.5)

    def test_three_agent_path_columns(self):
        w = netgraph.weight_matrix(line_graph(3))
        np.testing.assert_allclose(w[:, 1], [1 / 3, 1 / 3, 1 / 3])
        np.testing.assert_allclose(w[:, 0], [1 / 2, 1 / 2, 0.0])
        np.testing.assert_allclose(w[:, 2], [0.0, 1 / 2, 1 / 2])

    @given(connected_graphs())
    @settings(max_examples=60, deadline=None)
    def test_column_stochastic_and_positive_diagonal(self, g):
        w = netgraph.weight_matrix(g)
        sums = w.sum(axis=0)
        assert np.max(np.abs(sums - 1.0)) <= 1e-12
        assert np.all(np.diag(w) > 0)
        # support exactly on the direct neighborhood
        for j in range(g.n):
            support = tuple(np.flatnonzero(w[:, j] > 0))
            assert support == g.neighbors[j]

    def test_without_self_loops(self):
        w = netgraph.weight_matrix(line_graph(3), self_loops=False)
        assert np.all(np.diag(w) == 0.0)
        np.testing.assert_allclose(w.sum(axis=0), 1.0)

    def test_powers_approach_rank_one(self):
        w = netgraph.weight_matrix(netgraph.ring_graph(10))
        gaps = []
        power = np.linalg.matrix_power(w, 10)
        for _ in range(5):  # t = 10, 20, 40, 80, 160
            nxt = power @ power
            gaps.append(np.linalg.norm(power @ w - power))
            power = nxt
        assert all(a > b for a, b in zip(gaps, gaps[1:]))
        assert np.linalg.norm(np.linalg.matrix_power(w, 200) @ w
                              - np.linalg.matrix_power(w, 200)) < 1e-9


class TestKhop:
    def test_path_center_radius_one(self):
        g = line_graph(3)
        assert netgraph.khop(g, 1, 1).members == (0, 1, 2)

    @given(connected_graphs(), st.integers(0, 8))
    @settings(max_examples=60, deadline=None)
    def test_radius_zero_and_bfs_agreement(self, g, kappa):
        for i in range(g.n):
            assert netgraph.khop(g, i, 0).members == (i,)
            dist = bfs_distances(g, i)
            expected = tuple(sorted(j for j, dd in dist.items() if dd <= kappa))
            assert netgraph.khop(g, i, kappa).members == expected

    def test_ring_center_radius_two(self):
        g = netgraph.ring_graph(10)
        assert netgraph.khop(g, 0, 2).members == (0, 1, 2, 8, 9)

    @given(connected_graphs(), st.integers(0, 6))
    @settings(max_examples=60, deadline=None)
    def test_monotone_nesting_and_symmetry(self, g, kappa):
        for i in range(g.n):
            inner = set(netgraph.khop(g, i, kappa).members)
            outer = set(netgraph.khop(g, i, kappa + 1).members)
            assert inner <= outer
            for j in range(g.n):
                assert (j in inner) == (i in set(netgraph.khop(g, j, kappa).members))

    def test_bad_center(self):
        with pytest.raises(IndexOutOfRange):
            netgraph.khop(line_graph(3), 3, 1)
        with pytest.raises(IndexOutOfRange):
            netgraph.khop(line_graph(3), 0, -1)


class TestMaxNeighborhoodSize:
    def test_radius_zero_is_one(self):
        assert netgraph.max_neighborhood_size(line_graph(4), 0) == 1

    def test_ring_radius_one_is_three(self):
        assert netgraph.max_neighborhood_size(netgraph.ring_graph(10), 1) == 3

    @given(connected_graphs())
    @settings(max_examples=40, deadline=None)
    def test_monotone_and_saturates(self, g):
        sizes = [netgraph.max_neighborhood_size(g, k) for k in range(g.n + 1)]
        assert sizes == sorted(sizes)
        assert sizes[-1] == g.n
