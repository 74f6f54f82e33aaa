"""Shared instance builders for the test suite."""

from __future__ import annotations

import numpy as np

from nmarl import netgraph
from nmarl.model import FactoredNmarlModel, InitialDistribution


def line_graph(n: int) -> netgraph.AgentGraph:
    return netgraph.build_graph(n, [(k, k + 1) for k in range(1, n)])


def random_stochastic_kernel(
    rng: np.random.Generator, n_states: int, n_actions: int
) -> np.ndarray:
    k = rng.random((n_states, n_actions, n_states)) + 0.1
    return k / k.sum(axis=-1, keepdims=True)


def random_table_model(
    g: netgraph.AgentGraph,
    rng: np.random.Generator,
    n_states: int = 2,
    n_actions: int = 2,
    gamma: float = 0.9,
    kappa_r: int = 1,
    fixed_start: bool = False,
    reward_scale: float = 1.0,
) -> FactoredNmarlModel:
    """Random kernels plus dense random reward tables over the restrictions."""
    n = g.n
    kernels = [random_stochastic_kernel(rng, n_states, n_actions) for _ in range(n)]
    fns = []
    tables = []
    memberships = []
    for i in range(n):
        members = netgraph.khop(g, i, kappa_r).members
        shape = (n_states,) * len(members) + (n_actions,) * len(members)
        table = rng.uniform(-reward_scale, reward_scale, size=shape)
        tables.append(table)
        memberships.append(members)

        def fn(s_nb, a_nb, table=table):
            return float(table[tuple(s_nb) + tuple(a_nb)])

        fns.append(fn)

    def batch(states, actions):
        out = np.empty(states.shape, dtype=float)
        for i, (members, table) in enumerate(zip(memberships, tables)):
            key = tuple(states[..., j] for j in members) + tuple(
                actions[..., j] for j in members
            )
            out[..., i] = table[key]
        return out
    if fixed_start:
        rho = InitialDistribution.fixed([0] * n)
    else:
        dists = []
        for _ in range(n):
            p = rng.random(n_states) + 0.2
            dists.append(p / p.sum())
        rho = InitialDistribution.product(dists)
    return FactoredNmarlModel(
        graph=g,
        state_labels=[list(range(n_states))] * n,
        action_labels=[list(range(n_actions))] * n,
        kernels=kernels,
        reward_fns=fns,
        rho=rho,
        gamma=gamma,
        kappa_r=kappa_r,
        batch_rewards=batch,
    )


def constant_reward_model(
    g: netgraph.AgentGraph,
    c: float,
    n_states: int = 2,
    n_actions: int = 2,
    gamma: float = 0.9,
    rng: np.random.Generator | None = None,
) -> FactoredNmarlModel:
    rng = rng or np.random.default_rng(0)
    n = g.n
    kernels = [random_stochastic_kernel(rng, n_states, n_actions) for _ in range(n)]
    fns = [lambda s, a, c=c: c for _ in range(n)]
    return FactoredNmarlModel(
        graph=g,
        state_labels=[list(range(n_states))] * n,
        action_labels=[list(range(n_actions))] * n,
        kernels=kernels,
        reward_fns=fns,
        rho=InitialDistribution.fixed([0] * n),
        gamma=gamma,
        kappa_r=1,
        batch_rewards=lambda s, a: np.full(s.shape, float(c)),
    )


def zero_reward_model(g: netgraph.AgentGraph, **kw) -> FactoredNmarlModel:
    return constant_reward_model(g, 0.0, **kw)
