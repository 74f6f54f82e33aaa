"""Tabular coupled softmax policies with k-hop parameter mixing.

Each agent's logits at its own state mix its parameter table with those of
its ``kappa_p``-hop neighbors:

    z_j(a) = c_self * theta_j[s_j, a] + c_nbr * sum_{k in coupled(j)} theta_k[s_j, a]

with ``c_self = self_weight`` and ``c_nbr = neighbor_weight_total /
|coupled(j)|``. When the coupling set is empty (radius 0, or a single
agent) the policy degenerates to a plain softmax of the agent's own table,
``c_self = 1``. Parameters use the flat index ``idx(s, a) = s * A + a``, so
coupling requires a shared ``(S, A)`` index space across agents.

Score functions (gradients of ``log pi_j`` with respect to another agent's
parameter vector) have the closed form

    score[s, a] = c * 1{s == s_j} * (1{a == a_j} - pi_j(a | s_j))

where ``c`` is the mixing coefficient tying the two agents, and are zero
whenever the agents are more than ``kappa_p`` hops apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import netgraph
from .errors import DimensionMismatch, MissingNeighborParams


@dataclass(frozen=True)
class MixingSpec:
    """Mixing weights and coupling radius of the softmax policy family."""

    self_weight: float = 0.9
    neighbor_weight_total: float = 0.1
    kappa_p: int = 1

    def __post_init__(self) -> None:
        if self.self_weight < 0 or self.neighbor_weight_total < 0:
            raise ValueError("mixing weights must be nonnegative")
        if self.kappa_p < 0:
            raise ValueError(f"kappa_p must be nonnegative, got {self.kappa_p}")


class CoupledSoftmaxPolicy:
    """Policy family bound to one graph, one shared index space, one mixing spec."""

    def __init__(
        self,
        graph: netgraph.AgentGraph,
        n_states: int,
        n_actions: int,
        spec: MixingSpec,
    ) -> None:
        self.graph = graph
        self.n = graph.n
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)
        self.d = self.n_states * self.n_actions
        self.spec = spec
        self.hoods: tuple[tuple[int, ...], ...] = tuple(
            netgraph.khop(graph, i, spec.kappa_p).members for i in range(self.n)
        )
        self.coupled: tuple[tuple[int, ...], ...] = tuple(
            tuple(j for j in hood if j != i) for i, hood in enumerate(self.hoods)
        )
        # Empty coupling set degenerates to a pure softmax of the own table.
        self.self_coeff = np.array(
            [spec.self_weight if self.coupled[i] else 1.0 for i in range(self.n)]
        )
        self.nbr_coeff = np.array(
            [
                spec.neighbor_weight_total / len(self.coupled[i])
                if self.coupled[i]
                else 0.0
                for i in range(self.n)
            ]
        )
        # coupling[j, k] is the weight of agent k's table inside agent j's
        # logits; zero outside the hop neighborhood.
        self.coupling = np.zeros((self.n, self.n))
        for j in range(self.n):
            self.coupling[j, j] = self.self_coeff[j]
            for k in self.coupled[j]:
                self.coupling[j, k] = self.nbr_coeff[j]

    # ------------------------------------------------------------------
    # parameter handling

    def zero_params(self) -> np.ndarray:
        return np.zeros((self.n, self.d))

    def _row(self, params, agents_needed: Sequence[int]) -> np.ndarray:
        """Normalize a parameter source to an ``(n, d)`` array."""
        if isinstance(params, Mapping):
            full = np.zeros((self.n, self.d))
            for j in agents_needed:
                if j not in params:
                    raise MissingNeighborParams(
                        f"parameter vector of agent {j} is required but missing"
                    )
                vec = np.asarray(params[j], dtype=float)
                if vec.shape != (self.d,):
                    raise DimensionMismatch(
                        f"agent {j} parameter has shape {vec.shape}, expected ({self.d},)"
                    )
                full[j] = vec
            return full
        arr = np.asarray(params, dtype=float)
        if arr.shape != (self.n, self.d):
            raise DimensionMismatch(
                f"parameter stack has shape {arr.shape}, expected {(self.n, self.d)}"
            )
        return arr

    def mixed_logit_vector(self, j: int, params) -> np.ndarray:
        """Flat ``d``-vector of mixed logits for agent ``j``."""
        rows = self._row(params, self.hoods[j])
        z = self.coupling[j] @ rows
        if not np.all(np.isfinite(z)):
            raise ValueError(f"non-finite logits for agent {j}")
        return z

    # ------------------------------------------------------------------
    # distributions

    def action_probs(self, i: int, s_i: int, params) -> np.ndarray:
        """Softmax action distribution of agent ``i`` at its local state."""
        z = self.mixed_logit_vector(i, params)
        row = z[s_i * self.n_actions : (s_i + 1) * self.n_actions]
        return _softmax(row)

    def prob_tables(self, params) -> np.ndarray:
        """Per-agent policy tables ``(n, S, A)``.

        ``params`` may be an ``(n, d)`` array (every agent evaluated at the
        same joint parameter, e.g. the true one) or an ``(n, n, d)`` stack of
        per-agent estimate rows (agent ``i`` evaluated at ``params[i]``).
        """
        arr = np.asarray(params, dtype=float)
        if arr.shape == (self.n, self.d):
            mixed = self.coupling @ arr
        elif arr.shape == (self.n, self.n, self.d):
            mixed = np.einsum("ik,ikd->id", self.coupling, arr)
        else:
            raise DimensionMismatch(f"unsupported parameter stack shape {arr.shape}")
        if not np.all(np.isfinite(mixed)):
            raise ValueError("non-finite logits in parameter stack")
        tables = np.empty((self.n, self.n_states, self.n_actions))
        for i in range(self.n):
            tables[i] = _softmax_rows(mixed[i].reshape(self.n_states, self.n_actions))
        return tables

    def sample_joint_action(
        self, state: Sequence[int], params, rng: np.random.Generator
    ) -> tuple[int, ...]:
        """One draw per agent in agent order; agent ``i`` uses its own row
        when ``params`` is an ``(n, n, d)`` estimate stack."""
        tables = self.prob_tables(params)
        draws = rng.random(self.n)
        action = []
        for i in range(self.n):
            cum = np.cumsum(tables[i, state[i]])
            a = int(np.searchsorted(cum, draws[i], side="right"))
            action.append(min(a, self.n_actions - 1))
        return tuple(action)

    # ------------------------------------------------------------------
    # scores

    def coeff(self, i: int, j: int) -> float:
        """Mixing coefficient of agent ``i``'s parameters inside agent ``j``'s logits."""
        if i == j:
            return float(self.self_coeff[j])
        if i in self.coupled[j]:
            return float(self.nbr_coeff[j])
        return 0.0

    def score(self, i: int, j: int, s_j: int, a_j: int, params) -> np.ndarray:
        """Gradient of ``log pi_j(a_j | s_j)`` with respect to ``theta_i``.

        Identically zero when ``i`` is not within ``kappa_p`` hops of ``j``.
        """
        out = np.zeros(self.d)
        c = self.coeff(i, j)
        if c == 0.0:
            return out
        probs = self.action_probs(j, s_j, params)
        base = s_j * self.n_actions
        out[base : base + self.n_actions] = -c * probs
        out[base + a_j] += c
        return out

    def score_sum(
        self,
        i: int,
        snapshot_states: Sequence[int],
        snapshot_actions: Sequence[int],
        params,
    ) -> np.ndarray:
        """Sum of scores of all policies within ``kappa_p`` hops of agent ``i``.

        ``snapshot_states`` / ``snapshot_actions`` are indexed by agent id and
        only entries for the hop neighborhood of ``i`` are read. ``params``
        is the evaluating agent's own view (its estimate row, or the true
        stack); policies of neighbors ``j`` are themselves mixtures, so the
        row must cover agents up to ``2 * kappa_p`` hops away, which a full
        ``(n, d)`` row always does.
        """
        if isinstance(params, np.ndarray) and params.shape == (self.n, self.d):
            rows = params
        else:
            rows = self._row(params, range(self.n))
        total = np.zeros(self.d)
        na = self.n_actions
        for j in self.hoods[i]:
            base = snapshot_states[j] * na
            z = self.coupling[j] @ rows[:, base : base + na]
            z = z - z.max()
            e = np.exp(z)
            probs = e / e.sum()
            c = self.self_coeff[j] if i == j else self.nbr_coeff[j]
            seg = total[base : base + na]
            seg -= c * probs
            seg[snapshot_actions[j]] += c
        return total

    def score_bound(self) -> float:
        """Uniform bound on every single score norm for this policy class."""
        return float(np.max(np.maximum(self.self_coeff, self.nbr_coeff))) * math.sqrt(2.0)


def _softmax(row: np.ndarray) -> np.ndarray:
    z = row - np.max(row)  # overflow guard for |logits| up to ~700
    e = np.exp(z)
    return e / e.sum()


def _softmax_rows(table: np.ndarray) -> np.ndarray:
    z = table - table.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
