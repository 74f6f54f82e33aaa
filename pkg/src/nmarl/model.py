"""Factored networked MDP: per-agent finite spaces, independent kernels, local rewards.

States and actions are handled as 0-based indices internally; label lists
translate at the boundary. Transition kernels factor per agent, so the
global transition probability is the product of the local ones. Reward
functions read only the restriction of the global state-action to the
``kappa_r``-hop neighborhood of their agent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import netgraph
from .errors import (
    DimensionMismatch,
    EmptySpace,
    IndexOutOfRange,
    KernelRowNotStochastic,
    SpaceTooLarge,
)

ROW_SUM_TOL = 1e-12

# Per-agent reward callable over the neighborhood restriction: the tuples are
# ordered by the sorted member ids of the agent's kappa_r-hop neighborhood.
RewardFn = Callable[[tuple[int, ...], tuple[int, ...]], float]

# Registered reward families for model (de)serialization. Environments
# register themselves at import time.
REWARD_FACTORIES: dict[str, Callable[..., "RewardBundle"]] = {}


@dataclass
class RewardBundle:
    """Everything a reward family contributes to a model."""

    fns: list[RewardFn]
    bounds: list[float] | None = None
    batch: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None


def register_reward_family(name: str, factory: Callable[..., RewardBundle]) -> None:
    REWARD_FACTORIES[name] = factory


@dataclass(frozen=True)
class InitialDistribution:
    """Start-state distribution: a fixed state or a per-agent product."""

    kind: str  # "fixed" | "product"
    state: tuple[int, ...] | None = None
    dists: tuple[np.ndarray, ...] | None = None

    @staticmethod
    def fixed(state: Sequence[int]) -> "InitialDistribution":
        return InitialDistribution(kind="fixed", state=tuple(int(s) for s in state))

    @staticmethod
    def product(dists: Sequence[np.ndarray]) -> "InitialDistribution":
        return InitialDistribution(
            kind="product", dists=tuple(np.asarray(d, dtype=float) for d in dists)
        )

    def sample(self, rng: np.random.Generator) -> tuple[int, ...]:
        if self.kind == "fixed":
            return self.state  # type: ignore[return-value]
        draws = rng.random(len(self.dists))  # one draw per agent, agent order
        return tuple(
            int(np.searchsorted(np.cumsum(d), u, side="right"))
            for d, u in zip(self.dists, draws)
        )

    def prob(self, state: tuple[int, ...]) -> float:
        if self.kind == "fixed":
            return 1.0 if state == self.state else 0.0
        p = 1.0
        for d, s in zip(self.dists, state):
            p *= float(d[s])
        return p


@dataclass
class ModelDiagnostics:
    reward_bound: float
    state_sizes: tuple[int, ...]
    action_sizes: tuple[int, ...]
    n_joint_states: int


class FactoredNmarlModel:
    """Model tuple: graph, spaces, kernels, neighborhood rewards, start, discount.

    Args:
        graph: communication network; also defines reward neighborhoods.
        state_labels / action_labels: per-agent label lists.
        kernels: per-agent arrays ``P_i[s, a, s']`` with stochastic rows.
            Deterministic kernels are one-hot rows, not a separate code path.
        reward_fns: per-agent callables over the ``kappa_r``-hop restriction.
        rho: initial state distribution (fixed or per-agent product).
        gamma: discount in (0, 1).
        kappa_r: reward dependency radius, at least 1.
        reward_bounds: optional per-agent analytic caps on ``|r_i|``; when
            absent the bound is found by enumerating the restricted domain.
        batch_rewards: optional vectorized reward evaluator over arrays of
            shape ``(..., n)``; must agree with ``reward_fns``.
        reward_ref: ``(family_name, params)`` for JSON round-trips.
    """

    def __init__(
        self,
        graph: netgraph.AgentGraph,
        state_labels: Sequence[Sequence],
        action_labels: Sequence[Sequence],
        kernels: Sequence[np.ndarray],
        reward_fns: Sequence[RewardFn],
        rho: InitialDistribution,
        gamma: float,
        kappa_r: int = 1,
        reward_bounds: Sequence[float] | None = None,
        batch_rewards: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
        reward_ref: tuple[str, dict] | None = None,
    ) -> None:
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        if kappa_r < 1:
            raise ValueError(f"kappa_r must be at least 1, got {kappa_r}")
        self.graph = graph
        self.n = graph.n
        self.state_labels = [list(s) for s in state_labels]
        self.action_labels = [list(a) for a in action_labels]
        self.kernels = [np.asarray(k, dtype=float) for k in kernels]
        self.reward_fns = list(reward_fns)
        self.rho = rho
        self.gamma = float(gamma)
        self.kappa_r = int(kappa_r)
        self.reward_bounds = list(reward_bounds) if reward_bounds is not None else None
        self.batch_rewards = batch_rewards
        self.reward_ref = reward_ref
        self.reward_members: tuple[tuple[int, ...], ...] = tuple(
            netgraph.khop(graph, i, kappa_r).members for i in range(self.n)
        )
        self._kernel_cum = [np.cumsum(k, axis=-1) for k in self.kernels]
        self._stacked_cum: np.ndarray | None = None
        self._diagnostics: ModelDiagnostics | None = None

    # ------------------------------------------------------------------
    # shape helpers

    @property
    def state_sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.state_labels)

    @property
    def action_sizes(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.action_labels)

    @property
    def homogeneous(self) -> bool:
        return len(set(self.state_sizes)) == 1 and len(set(self.action_sizes)) == 1

    @property
    def reward_bound(self) -> float:
        return self.validate().reward_bound

    def stacked_kernel_cum(self) -> np.ndarray:
        """Kernel row cumsums stacked to ``(n, S, A, S)``; homogeneous models only."""
        if self._stacked_cum is None:
            if not self.homogeneous:
                raise DimensionMismatch("stacked kernels require homogeneous spaces")
            self._stacked_cum = np.stack(self._kernel_cum)
        return self._stacked_cum

    # ------------------------------------------------------------------
    # validation

    def validate(self) -> ModelDiagnostics:
        """Check structural invariants and return diagnostics (cached).

        Raises:
            EmptySpace: some agent has no states or no actions.
            DimensionMismatch: a kernel shape disagrees with the spaces.
            KernelRowNotStochastic: some kernel row does not sum to one.
        """
        if self._diagnostics is not None:
            return self._diagnostics
        if len(self.state_labels) != self.n or len(self.action_labels) != self.n:
            raise DimensionMismatch("need one state and action space per agent")
        if len(self.kernels) != self.n or len(self.reward_fns) != self.n:
            raise DimensionMismatch("need one kernel and reward function per agent")
        for i, (ns, na) in enumerate(zip(self.state_sizes, self.action_sizes)):
            if ns == 0 or na == 0:
                raise EmptySpace(f"agent {i} has an empty state or action space")
            if self.kernels[i].shape != (ns, na, ns):
                raise DimensionMismatch(
                    f"kernel {i} has shape {self.kernels[i].shape}, "
                    f"expected {(ns, na, ns)}"
                )
            rows = self.kernels[i]
            if np.any(rows < 0.0):
                raise KernelRowNotStochastic(f"kernel {i} has negative entries")
            sums = rows.sum(axis=-1)
            if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
                worst = float(np.max(np.abs(sums - 1.0)))
                raise KernelRowNotStochastic(
                    f"kernel {i} rows deviate from 1 by up to {worst:.3e}"
                )
        self._diagnostics = ModelDiagnostics(
            reward_bound=self._compute_reward_bound(),
            state_sizes=self.state_sizes,
            action_sizes=self.action_sizes,
            n_joint_states=int(np.prod([float(s) for s in self.state_sizes])),
        )
        return self._diagnostics

    def _compute_reward_bound(self) -> float:
        bound = 0.0
        for i in range(self.n):
            if self.reward_bounds is not None:
                bound = max(bound, float(self.reward_bounds[i]))
                continue
            members = self.reward_members[i]
            domain = 1
            for j in members:
                domain *= self.state_sizes[j] * self.action_sizes[j]
            if domain > 2_000_000:
                raise SpaceTooLarge(
                    f"reward domain of agent {i} has {domain} points; "
                    "declare reward_bounds instead of enumerating"
                )
            for s_nb in np.ndindex(*(self.state_sizes[j] for j in members)):
                for a_nb in np.ndindex(*(self.action_sizes[j] for j in members)):
                    bound = max(bound, abs(float(self.reward_fns[i](s_nb, a_nb))))
        return bound

    # ------------------------------------------------------------------
    # dynamics

    def sample_transition(
        self, s: Sequence[int], a: Sequence[int], rng: np.random.Generator
    ) -> tuple[int, ...]:
        """Sample each component independently; exactly ``n`` draws, agent order."""
        draws = rng.random(self.n)
        nxt = []
        for i in range(self.n):
            cum = self._kernel_cum[i][s[i], a[i]]
            k = int(np.searchsorted(cum, draws[i], side="right"))
            nxt.append(min(k, len(cum) - 1))
        return tuple(nxt)

    def transition_prob(
        self, s: Sequence[int], a: Sequence[int], s_next: Sequence[int]
    ) -> float:
        p = 1.0
        for i in range(self.n):
            p *= float(self.kernels[i][s[i], a[i], s_next[i]])
        return p

    def rewards(self, s: Sequence[int], a: Sequence[int]) -> np.ndarray:
        """Per-agent reward vector; component ``i`` reads only its restriction."""
        if self.batch_rewards is not None:
            return np.asarray(
                self.batch_rewards(np.asarray(s), np.asarray(a)), dtype=float
            )
        out = np.empty(self.n)
        for i, members in enumerate(self.reward_members):
            s_nb = tuple(s[j] for j in members)
            a_nb = tuple(a[j] for j in members)
            out[i] = self.reward_fns[i](s_nb, a_nb)
        return out

    # ------------------------------------------------------------------
    # serialization (small instances only)

    def to_json(self) -> dict:
        if self.reward_ref is None:
            raise ValueError("model has no registered reward family; cannot serialize")
        name, params = self.reward_ref
        return {
            "graph": self.graph.to_json(),
            "states": self.state_labels,
            "actions": self.action_labels,
            "kernels": [k.tolist() for k in self.kernels],
            "rho": _rho_to_json(self.rho),
            "gamma": self.gamma,
            "kappa_r": self.kappa_r,
            "reward": {"name": name, "params": params},
        }

    @staticmethod
    def from_json(obj: dict) -> "FactoredNmarlModel":
        graph = netgraph.graph_from_json(obj["graph"])
        name = obj["reward"]["name"]
        if name not in REWARD_FACTORIES:
            raise KeyError(f"unknown reward family {name!r}")
        kappa_r = int(obj.get("kappa_r", 1))
        bundle = REWARD_FACTORIES[name](graph, kappa_r, obj["reward"]["params"])
        return FactoredNmarlModel(
            graph=graph,
            state_labels=obj["states"],
            action_labels=obj["actions"],
            kernels=[np.asarray(k, dtype=float) for k in obj["kernels"]],
            reward_fns=bundle.fns,
            rho=_rho_from_json(obj["rho"]),
            gamma=float(obj["gamma"]),
            kappa_r=kappa_r,
            reward_bounds=bundle.bounds,
            batch_rewards=bundle.batch,
            reward_ref=(name, obj["reward"]["params"]),
        )

    def check_state(self, s: Sequence[int]) -> None:
        for i, si in enumerate(s):
            if not 0 <= si < self.state_sizes[i]:
                raise IndexOutOfRange(f"state {si} of agent {i} out of range")


def _rho_to_json(rho: InitialDistribution) -> dict:
    if rho.kind == "fixed":
        return {"kind": "fixed", "state": list(rho.state)}
    return {"kind": "product", "dists": [d.tolist() for d in rho.dists]}


def _rho_from_json(obj: dict) -> InitialDistribution:
    if obj["kind"] == "fixed":
        return InitialDistribution.fixed(obj["state"])
    return InitialDistribution.product([np.asarray(d) for d in obj["dists"]])


def _zero_reward_family(
    graph: netgraph.AgentGraph, kappa_r: int, params: dict
) -> RewardBundle:
    del params
    fns: list[RewardFn] = [lambda s, a: 0.0 for _ in range(graph.n)]
    batch = lambda s, a: np.zeros(s.shape, dtype=float)  # noqa: E731
    return RewardBundle(fns=fns, bounds=[0.0] * graph.n, batch=batch)


def _table_reward_family(
    graph: netgraph.AgentGraph, kappa_r: int, params: dict
) -> RewardBundle:
    """Dense per-agent tables over the restricted domain, for test instances.

    ``params["tables"][i]`` is a nested list indexed by the member states
    then member actions, member order sorted.
    """
    tables = [np.asarray(t, dtype=float) for t in params["tables"]]
    fns: list[RewardFn] = []
    for i in range(graph.n):
        table = tables[i]

        def fn(s_nb, a_nb, table=table):
            return float(table[tuple(s_nb) + tuple(a_nb)])

        fns.append(fn)
    return RewardBundle(fns=fns)


register_reward_family("zero", _zero_reward_family)
register_reward_family("table", _table_reward_family)
