"""Exact dynamic-programming evaluators for desk-scale instances.

Everything here enumerates product spaces and iterates truncated Bellman
recursions, entirely independent of the sampling estimator it certifies.
Horizons are truncated at ``T = ceil(ln(eps * (1 - gamma) / R) / ln gamma)``
so the absolute error is bounded by ``eps``; no sampling occurs anywhere.

Per-agent action distributions factor over agents (each policy table reads
only the agent's own state), so a chain restricted to any agent subset is
exact as long as the subset covers the reward dependencies being evaluated.
Restriction is therefore an optimization, never an approximation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import netgraph
from .errors import SpaceTooLarge
from .model import FactoredNmarlModel
from .policy import CoupledSoftmaxPolicy

MAX_JOINT_STATES = 100_000
MAX_TABLE_ENTRIES = 50_000_000  # dense DP arrays beyond this are refused


@dataclass(frozen=True)
class EnumeratedSpace:
    """All tuples of a small product space, in row-major order."""

    sizes: tuple[int, ...]
    points: tuple[tuple[int, ...], ...]

    def index(self, point: Sequence[int]) -> int:
        idx = 0
        for size, coord in zip(self.sizes, point):
            idx = idx * size + coord
        return idx


def enumerate_space(sizes: Sequence[int], cap: int = MAX_JOINT_STATES) -> EnumeratedSpace:
    total = 1
    for s in sizes:
        total *= s
    if total > cap:
        raise SpaceTooLarge(f"product space has {total} points, cap is {cap}")
    return EnumeratedSpace(
        sizes=tuple(sizes), points=tuple(itertools.product(*(range(s) for s in sizes)))
    )


@dataclass
class RestrictedChain:
    """Markov chain over an agent subset, with a scalar per-step reward.

    ``trans[s, a, s']`` and ``policy[s, a]`` are joint tables over the
    subset's product spaces; ``reward[s, a]`` is whatever quantity the DP
    integrates (one agent's reward, a neighborhood average, ...).
    """

    members: tuple[int, ...]
    state_space: EnumeratedSpace
    action_space: EnumeratedSpace
    trans: np.ndarray
    policy: np.ndarray
    reward: np.ndarray


def build_restricted_chain(
    m: FactoredNmarlModel,
    members: Sequence[int],
    prob_tables: Sequence[np.ndarray],
    reward_fn: Callable[[tuple[int, ...], tuple[int, ...]], float],
) -> RestrictedChain:
    """Assemble the joint tables of the chain restricted to ``members``.

    ``reward_fn`` receives the member-ordered state and action tuples.
    """
    members = tuple(sorted(members))
    sspace = enumerate_space([m.state_sizes[j] for j in members])
    aspace = enumerate_space([m.action_sizes[j] for j in members])
    ns, na = len(sspace.points), len(aspace.points)
    if ns * na * ns > MAX_TABLE_ENTRIES or ns * na > MAX_TABLE_ENTRIES:
        raise SpaceTooLarge(
            f"restricted chain needs {ns}x{na}x{ns} transition entries"
        )

    trans = np.ones((ns, na, ns))
    policy_tab = np.ones((ns, na))
    reward = np.empty((ns, na))
    for si, s in enumerate(sspace.points):
        for ai, a in enumerate(aspace.points):
            reward[si, ai] = reward_fn(s, a)
            row = np.ones(1)
            pol = 1.0
            for pos, j in enumerate(members):
                pol *= prob_tables[j][s[pos], a[pos]]
                row = np.multiply.outer(row, m.kernels[j][s[pos], a[pos]]).ravel()
            policy_tab[si, ai] = pol
            trans[si, ai] = row
    return RestrictedChain(
        members=members,
        state_space=sspace,
        action_space=aspace,
        trans=trans,
        policy=policy_tab,
        reward=reward,
    )


def truncation_horizon(gamma: float, eps: float, reward_bound: float) -> int:
    """Smallest horizon with discounted tail below ``eps``."""
    if reward_bound <= 0.0:
        return 1
    return max(1, math.ceil(math.log(eps * (1.0 - gamma) / reward_bound) / math.log(gamma)))


def chain_q_table(chain: RestrictedChain, gamma: float, eps: float) -> np.ndarray:
    """Action-value table of the chain's reward, truncated at accuracy ``eps``."""
    bound = float(np.max(np.abs(chain.reward)))
    horizon = truncation_horizon(gamma, eps, bound)
    v = np.zeros(len(chain.state_space.points))
    q = np.zeros_like(chain.reward)
    for _ in range(horizon):
        q = chain.reward + gamma * chain.trans @ v
        v = (chain.policy * q).sum(axis=1)
    return q


# ----------------------------------------------------------------------
# full-joint quantities


def _mean_reward_fn(m: FactoredNmarlModel) -> Callable:
    def fn(s: tuple[int, ...], a: tuple[int, ...]) -> float:
        return float(np.mean(m.rewards(s, a)))

    return fn


def _full_chain(
    m: FactoredNmarlModel, prob_tables: Sequence[np.ndarray]
) -> RestrictedChain:
    return build_restricted_chain(m, range(m.n), prob_tables, _mean_reward_fn(m))


def _initial_vector(m: FactoredNmarlModel, space: EnumeratedSpace) -> np.ndarray:
    rho = np.zeros(len(space.points))
    if m.rho.kind == "fixed":
        rho[space.index(m.rho.state)] = 1.0
    else:
        for idx, s in enumerate(space.points):
            rho[idx] = m.rho.prob(s)
    return rho


def exact_objective(
    m: FactoredNmarlModel,
    prob_tables: Sequence[np.ndarray],
    eps: float = 1e-9,
) -> float:
    """Discounted average cumulative reward of the joint policy, within ``eps``."""
    chain = _full_chain(m, prob_tables)
    q = chain_q_table(chain, m.gamma, eps)
    v = (chain.policy * q).sum(axis=1)
    rho = _initial_vector(m, chain.state_space)
    return float(rho @ v)


def global_q_value(
    m: FactoredNmarlModel,
    prob_tables: Sequence[np.ndarray],
    s: Sequence[int],
    a: Sequence[int],
    eps: float = 1e-9,
) -> float:
    """Joint action value of the per-step average reward from ``(s, a)``."""
    chain = _full_chain(m, prob_tables)
    q = chain_q_table(chain, m.gamma, eps)
    return float(q[chain.state_space.index(tuple(s)), chain.action_space.index(tuple(a))])


def local_q_value(
    m: FactoredNmarlModel,
    prob_tables: Sequence[np.ndarray],
    i: int,
    s_nb: Sequence[int],
    a_nb: Sequence[int],
    eps: float = 1e-9,
) -> float:
    """Action value of agent ``i``'s own reward stream on its reward neighborhood.

    ``s_nb`` / ``a_nb`` are ordered by the sorted members of the
    ``kappa_r``-hop neighborhood of ``i``.
    """
    members = m.reward_members[i]

    def reward_fn(s: tuple[int, ...], a: tuple[int, ...]) -> float:
        return float(m.reward_fns[i](s, a))

    chain = build_restricted_chain(m, members, prob_tables, reward_fn)
    q = chain_q_table(chain, m.gamma, eps)
    return float(q[chain.state_space.index(tuple(s_nb)), chain.action_space.index(tuple(a_nb))])


def _restriction_positions(
    outer: Sequence[int], inner: Sequence[int]
) -> list[int]:
    pos = {j: k for k, j in enumerate(outer)}
    return [pos[j] for j in inner]


def neighbors_averaged_chain(
    m: FactoredNmarlModel,
    prob_tables: Sequence[np.ndarray],
    i: int,
    kappa_p: int,
) -> RestrictedChain:
    """Chain whose reward is the ``1/N``-scaled sum of the rewards of all
    agents within ``kappa_p + kappa_r`` hops of ``i``, defined over the
    ``kappa_p + 2 * kappa_r``-hop state-action restriction."""
    inner = netgraph.khop(m.graph, i, kappa_p + m.kappa_r).members
    outer = netgraph.khop(m.graph, i, kappa_p + 2 * m.kappa_r).members
    slots = {
        j: _restriction_positions(outer, m.reward_members[j]) for j in inner
    }

    def reward_fn(s: tuple[int, ...], a: tuple[int, ...]) -> float:
        total = 0.0
        for j in inner:
            sel = slots[j]
            s_j = tuple(s[k] for k in sel)
            a_j = tuple(a[k] for k in sel)
            total += float(m.reward_fns[j](s_j, a_j))
        return total / m.n

    return build_restricted_chain(m, outer, prob_tables, reward_fn)


def neighbors_averaged_q(
    m: FactoredNmarlModel,
    prob_tables: Sequence[np.ndarray],
    i: int,
    s_nb: Sequence[int],
    a_nb: Sequence[int],
    kappa_p: int,
    eps: float = 1e-9,
) -> float:
    """Value of the neighborhood-averaged reward stream at one restriction point."""
    chain = neighbors_averaged_chain(m, prob_tables, i, kappa_p)
    q = chain_q_table(chain, m.gamma, eps)
    return float(q[chain.state_space.index(tuple(s_nb)), chain.action_space.index(tuple(a_nb))])


# ----------------------------------------------------------------------
# visitation and gradients


def discounted_visitation(
    m: FactoredNmarlModel,
    prob_tables: Sequence[np.ndarray],
    eps: float = 1e-9,
) -> tuple[np.ndarray, EnumeratedSpace]:
    """``(1 - gamma)``-normalized discounted state occupancy over the joint space."""
    chain = _full_chain(m, prob_tables)
    tp = np.einsum("sa,sat->st", chain.policy, chain.trans)
    dist = _initial_vector(m, chain.state_space)
    horizon = truncation_horizon(m.gamma, eps, 1.0)
    tab = np.zeros_like(dist)
    weight = 1.0
    for _ in range(horizon + 1):
        tab += weight * dist
        dist = dist @ tp
        weight *= m.gamma
    return (1.0 - m.gamma) * tab, chain.state_space


def _tables_and_scores(
    m: FactoredNmarlModel,
    pol: CoupledSoftmaxPolicy,
    params: np.ndarray,
    i: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Dynamics tables plus the parameter row agent ``i`` evaluates scores at.

    ``params`` with shape ``(n, d)`` means consistent true parameters; an
    ``(n, n, d)`` stack means each agent executes its own estimate row while
    agent ``i`` scores with row ``i``.
    """
    arr = np.asarray(params, dtype=float)
    tables = pol.prob_tables(arr)
    score_row = arr if arr.ndim == 2 else arr[i]
    return tables, score_row


def gradient_via_local_q(
    m: FactoredNmarlModel,
    pol: CoupledSoftmaxPolicy,
    params: np.ndarray,
    i: int,
    full_sum: bool = False,
    eps: float = 1e-9,
) -> np.ndarray:
    """Policy gradient for agent ``i`` as a visitation-weighted sum of local
    action values times the neighborhood score sum.

    The local-value sum runs over agents within ``kappa_p + kappa_r`` hops;
    ``full_sum=True`` sums over every agent instead (the two agree for
    consistent parameters because out-of-range score terms integrate to
    zero).
    """
    tables, score_row = _tables_and_scores(m, pol, params, i)
    visitation, space = discounted_visitation(m, tables, eps)
    targets = (
        tuple(range(m.n))
        if full_sum
        else netgraph.khop(m.graph, i, pol.spec.kappa_p + m.kappa_r).members
    )
    q_tabs = {}
    for l in targets:
        members = m.reward_members[l]

        def reward_fn(s, a, l=l):
            return float(m.reward_fns[l](s, a))

        chain = build_restricted_chain(m, members, tables, reward_fn)
        q_tabs[l] = (chain, chain_q_table(chain, m.gamma, eps))

    aspace = enumerate_space(m.action_sizes)
    grad = np.zeros(pol.d)
    for s_idx, s in enumerate(space.points):
        ds = visitation[s_idx]
        if ds == 0.0:
            continue
        for a in aspace.points:
            pi = 1.0
            for j in range(m.n):
                pi *= tables[j][s[j], a[j]]
            if pi == 0.0:
                continue
            qsum = 0.0
            for l in targets:
                chain, qtab = q_tabs[l]
                sel = chain.members
                s_r = tuple(s[j] for j in sel)
                a_r = tuple(a[j] for j in sel)
                qsum += qtab[
                    chain.state_space.index(s_r), chain.action_space.index(a_r)
                ]
            weight = ds * pi * qsum / m.n
            grad += weight * pol.score_sum(i, s, a, score_row)
    return grad / (1.0 - m.gamma)


def gradient_via_averaged_q(
    m: FactoredNmarlModel,
    pol: CoupledSoftmaxPolicy,
    params: np.ndarray,
    i: int,
    eps: float = 1e-9,
) -> np.ndarray:
    """Policy gradient for agent ``i`` using the neighbors-averaged action value."""
    tables, score_row = _tables_and_scores(m, pol, params, i)
    visitation, space = discounted_visitation(m, tables, eps)
    chain = neighbors_averaged_chain(m, tables, i, pol.spec.kappa_p)
    qtab = chain_q_table(chain, m.gamma, eps)
    sel = chain.members

    aspace = enumerate_space(m.action_sizes)
    grad = np.zeros(pol.d)
    for s_idx, s in enumerate(space.points):
        ds = visitation[s_idx]
        if ds == 0.0:
            continue
        for a in aspace.points:
            pi = 1.0
            for j in range(m.n):
                pi *= tables[j][s[j], a[j]]
            if pi == 0.0:
                continue
            s_r = tuple(s[j] for j in sel)
            a_r = tuple(a[j] for j in sel)
            qv = qtab[chain.state_space.index(s_r), chain.action_space.index(a_r)]
            grad += ds * pi * qv * pol.score_sum(i, s, a, score_row)
    return grad / (1.0 - m.gamma)


def central_difference(fn, x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for k in range(x.size):
        orig = x[k]
        x[k] = orig + h
        f_plus = fn(x)
        x[k] = orig - h
        f_minus = fn(x)
        x[k] = orig
        grad[k] = (f_plus - f_minus) / (2.0 * h)
    return grad


def finite_difference_gradient(
    m: FactoredNmarlModel,
    pol: CoupledSoftmaxPolicy,
    theta: np.ndarray,
    i: int,
    h: float = 1e-5,
    eps: float = 1e-9,
) -> np.ndarray:
    """Central differences of the exact objective along agent ``i``'s coordinates."""
    work = np.array(theta, dtype=float)

    def objective_of_row(row: np.ndarray) -> float:
        work[i] = row
        return exact_objective(m, pol.prob_tables(work), eps)

    return central_difference(objective_of_row, np.array(theta[i], dtype=float), h)
