"""Concrete environments: layered-DAG robot path planning and wireless power control.

Both builders produce :class:`FactoredNmarlModel` instances with
deterministic (one-hot) kernels and direct-neighbor reward dependencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import netgraph
from .errors import ConfigError, NonPositiveNoise, UnknownLocation
from .model import (
    FactoredNmarlModel,
    InitialDistribution,
    RewardBundle,
    register_reward_family,
)

PATH_LOCATIONS = (
    "b1", "b2", "b3", "b4", "b5",
    "c1", "c2", "c3", "c4",
    "d1", "d2", "d3",
    "e",
)


def _default_successors() -> dict[str, tuple[str, ...]]:
    """Layered DAG over the 13 locations.

    Each source node fans out to the two like-indexed nodes of the next
    layer, clipped at the layer boundaries (so the outermost nodes have a
    single successor); the lower-index successor is the "upper" edge. Every
    location reaches the destination ``e``, which has no outgoing edges.
    """
    succ: dict[str, tuple[str, ...]] = {}
    for k in range(1, 6):
        lo, hi = max(1, k - 1), min(4, k)
        succ[f"b{k}"] = tuple(dict.fromkeys((f"c{lo}", f"c{hi}")))
    for k in range(1, 5):
        lo, hi = max(1, k - 1), min(3, k)
        succ[f"c{k}"] = tuple(dict.fromkeys((f"d{lo}", f"d{hi}")))
    for k in range(1, 4):
        succ[f"d{k}"] = ("e",)
    succ["e"] = ()
    return succ


@dataclass(frozen=True)
class PathStructure:
    """Acyclic location graph with per-node (upper, lower) edge ordering."""

    locations: tuple[str, ...] = PATH_LOCATIONS
    successors: Mapping[str, tuple[str, ...]] = field(default_factory=_default_successors)
    destination: str = "e"

    def __post_init__(self) -> None:
        index = {loc: k for k, loc in enumerate(self.locations)}
        if self.destination not in index:
            raise UnknownLocation(f"destination {self.destination!r} not a location")
        for loc, succ in self.successors.items():
            if loc not in index:
                raise UnknownLocation(f"successor map names unknown location {loc!r}")
            if len(succ) > 2:
                raise ConfigError(f"location {loc!r} has out-degree {len(succ)} > 2")
            for s in succ:
                if s not in index:
                    raise UnknownLocation(f"{loc!r} points at unknown location {s!r}")
        # acyclicity + destination reachability by depth-first walk
        reaches: dict[str, bool] = {self.destination: True}
        state: dict[str, int] = {}

        def visit(loc: str) -> bool:
            if loc in reaches:
                return reaches[loc]
            if state.get(loc) == 1:
                raise ConfigError(f"path structure has a cycle through {loc!r}")
            state[loc] = 1
            ok = any(visit(s) for s in self.successors.get(loc, ()))
            state[loc] = 2
            reaches[loc] = ok
            return ok

        for loc in self.locations:
            if not visit(loc):
                raise ConfigError(f"location {loc!r} cannot reach the destination")

    def index(self, loc: str) -> int:
        try:
            return self.locations.index(loc)
        except ValueError:
            raise UnknownLocation(f"unknown location {loc!r}") from None


def path_transition(loc: str, act: int, ps: PathStructure) -> str:
    """Movement rule: 0 stays put, 1/2 follow the upper/lower edge, and any
    action beyond the out-degree stays put."""
    if loc not in ps.successors:
        raise UnknownLocation(f"unknown location {loc!r}")
    succ = ps.successors[loc]
    if act == 0 or act > len(succ):
        return loc
    return succ[act - 1]


@dataclass(frozen=True)
class PathPlanningSpec:
    """Ten robots on the layered DAG, started pairwise on the first layer."""

    n: int = 10
    starts: tuple[str, ...] = ("b1", "b2", "b3", "b4", "b5") * 2
    gamma: float = 0.9
    r_eps: float = 0.5
    collision_weight: float = 0.5
    terminal_zero_reward: bool = False

    def __post_init__(self) -> None:
        if len(self.starts) != self.n:
            raise ConfigError(
                f"{self.n} agents need {self.n} start locations, got {len(self.starts)}"
            )
        if self.r_eps <= 0:
            raise ConfigError("the per-step time cost must be positive")


def path_reward(
    i_pos: int,
    s_nb: Sequence[int],
    a_nb: Sequence[int],
    spec: PathPlanningSpec,
    next_table: np.ndarray,
    dest_idx: int,
) -> float:
    """Reward of the agent at position ``i_pos`` of a neighborhood restriction.

    Staying costs the flat time penalty; moving additionally costs a share
    per neighbor that traverses the same (from, to) edge this step. An agent
    that stays never collides, and a stationary neighbor can never share a
    moving agent's edge.
    """
    s_i, a_i = s_nb[i_pos], a_nb[i_pos]
    nxt_i = next_table[s_i, a_i]
    if spec.terminal_zero_reward and s_i == dest_idx:
        return 0.0
    if nxt_i == s_i:
        return -spec.r_eps
    shared = 0
    for k, (s_j, a_j) in enumerate(zip(s_nb, a_nb)):
        if k == i_pos:
            continue
        if s_j == s_i and next_table[s_j, a_j] == nxt_i:
            shared += 1
    return -spec.r_eps - spec.collision_weight * shared / spec.n


def _path_next_table(ps: PathStructure) -> np.ndarray:
    table = np.empty((len(ps.locations), 3), dtype=np.intp)
    for s, loc in enumerate(ps.locations):
        for a in range(3):
            table[s, a] = ps.index(path_transition(loc, a, ps))
    return table


def _path_reward_bundle(
    graph: netgraph.AgentGraph, kappa_r: int, params: dict
) -> RewardBundle:
    spec = PathPlanningSpec(
        n=graph.n,
        starts=tuple(params.get("starts", PathPlanningSpec.starts)),
        gamma=params.get("gamma", 0.9),
        r_eps=params.get("r_eps", 0.5),
        collision_weight=params.get("collision_weight", 0.5),
        terminal_zero_reward=params.get("terminal_zero_reward", False),
    )
    ps = _structure_from_params(params)
    next_table = _path_next_table(ps)
    dest = ps.index(ps.destination)

    fns = []
    for i in range(graph.n):
        members = netgraph.khop(graph, i, kappa_r).members
        i_pos = members.index(i)

        def fn(s_nb, a_nb, i_pos=i_pos):
            return path_reward(i_pos, s_nb, a_nb, spec, next_table, dest)

        fns.append(fn)

    # Ordered neighbor pairs and an incidence matrix turn the per-agent
    # shared-edge count into one comparison plus one matmul.
    pair_i, pair_j = [], []
    for i in range(graph.n):
        for j in netgraph.khop(graph, i, kappa_r).members:
            if j != i:
                pair_i.append(i)
                pair_j.append(j)
    pair_i_arr = np.asarray(pair_i, dtype=np.intp)
    pair_j_arr = np.asarray(pair_j, dtype=np.intp)
    incidence = np.zeros((len(pair_i), graph.n))
    incidence[np.arange(len(pair_i)), pair_i_arr] = 1.0

    def batch(states: np.ndarray, acts: np.ndarray) -> np.ndarray:
        nxt = next_table[states, acts]
        stay = nxt == states
        code = states * len(ps.locations) + nxt
        # Stationary agents take the flat-cost branch, so their spurious
        # code matches never surface; a mover can't match a stayer's code.
        matches = (code[..., pair_i_arr] == code[..., pair_j_arr]).astype(float)
        counts = matches @ incidence
        r = np.where(
            stay,
            -spec.r_eps,
            -spec.r_eps - spec.collision_weight * counts / spec.n,
        )
        if spec.terminal_zero_reward:
            r = np.where(states == dest, 0.0, r)
        return r

    # Formula cap: time cost plus the penalty with every agent colliding.
    cap = spec.r_eps + spec.collision_weight * graph.n / spec.n
    return RewardBundle(fns=fns, bounds=[cap] * graph.n, batch=batch)


def _structure_from_params(params: dict) -> PathStructure:
    if "successors" in params:
        return PathStructure(
            locations=tuple(params.get("locations", PATH_LOCATIONS)),
            successors={k: tuple(v) for k, v in params["successors"].items()},
            destination=params.get("destination", "e"),
        )
    return PathStructure()


def build_path_env(
    spec: PathPlanningSpec | None = None,
    ps: PathStructure | None = None,
    comm: netgraph.AgentGraph | None = None,
) -> FactoredNmarlModel:
    """Path-planning model: 13 states, 3 actions, deterministic kernels,
    direct-neighbor collision rewards, fixed starts."""
    spec = spec or PathPlanningSpec()
    ps = ps or PathStructure()
    comm = comm or netgraph.ring_graph(spec.n)
    if comm.n != spec.n:
        raise ConfigError(f"communication graph has {comm.n} agents, spec has {spec.n}")
    next_table = _path_next_table(ps)
    n_loc = len(ps.locations)
    kernel = np.zeros((n_loc, 3, n_loc))
    for s in range(n_loc):
        for a in range(3):
            kernel[s, a, next_table[s, a]] = 1.0

    params = {
        "starts": list(spec.starts),
        "gamma": spec.gamma,
        "r_eps": spec.r_eps,
        "collision_weight": spec.collision_weight,
        "terminal_zero_reward": spec.terminal_zero_reward,
        "successors": {k: list(v) for k, v in ps.successors.items()},
        "locations": list(ps.locations),
        "destination": ps.destination,
    }
    bundle = _path_reward_bundle(comm, 1, params)
    return FactoredNmarlModel(
        graph=comm,
        state_labels=[list(ps.locations)] * spec.n,
        action_labels=[[0, 1, 2]] * spec.n,
        kernels=[kernel] * spec.n,
        reward_fns=bundle.fns,
        rho=InitialDistribution.fixed([ps.index(loc) for loc in spec.starts]),
        gamma=spec.gamma,
        kappa_r=1,
        reward_bounds=bundle.bounds,
        batch_rewards=bundle.batch,
        reward_ref=("path_planning", params),
    )


# ----------------------------------------------------------------------
# power control

_POWER_ACTIONS = (0, -1, 1)


def _power_reward_bundle(
    graph: netgraph.AgentGraph, kappa_r: int, params: dict
) -> RewardBundle:
    gains = np.asarray(params["gains"], dtype=float)
    noise = np.asarray(params["noise"], dtype=float)
    price = np.asarray(params["price"], dtype=float)
    if np.any(noise <= 0.0):
        raise NonPositiveNoise("noise powers must be strictly positive")
    if np.any(gains < 0.0):
        raise ConfigError("channel gains must be nonnegative")

    fns = []
    for i in range(graph.n):
        members = netgraph.khop(graph, i, kappa_r).members
        i_pos = members.index(i)

        def fn(s_nb, a_nb, i=i, members=members, i_pos=i_pos):
            p_i = s_nb[i_pos]
            interference = sum(
                s_nb[k] * gains[i, j] for k, j in enumerate(members) if j != i
            )
            return math.log(1.0 + p_i * gains[i, i] / (interference + noise[i])) - (
                price[i] * p_i
            )

        fns.append(fn)
    return RewardBundle(fns=fns)


def build_power_env(
    n: int,
    levels: int,
    gains: Sequence[Sequence[float]],
    noise: Sequence[float],
    price: Sequence[float],
    comm: netgraph.AgentGraph | None = None,
    gamma: float = 0.9,
    start: Sequence[int] | None = None,
) -> FactoredNmarlModel:
    """Power-control model: states are discrete power levels ``0..levels-1``,
    actions hold/decrease/increase clipped at the grid edges, rewards trade
    log-throughput under neighbor interference against a power price."""
    if levels < 2:
        raise ConfigError(f"need at least 2 power levels, got {levels}")
    comm = comm or netgraph.ring_graph(n)
    if comm.n != n:
        raise ConfigError(f"communication graph has {comm.n} agents, expected {n}")
    kernel = np.zeros((levels, 3, levels))
    for s in range(levels):
        for a, delta in enumerate(_POWER_ACTIONS):
            kernel[s, a, min(max(s + delta, 0), levels - 1)] = 1.0
    params = {
        "gains": [list(map(float, row)) for row in gains],
        "noise": [float(x) for x in noise],
        "price": [float(x) for x in price],
    }
    bundle = _power_reward_bundle(comm, 1, params)
    start = list(start) if start is not None else [0] * n
    return FactoredNmarlModel(
        graph=comm,
        state_labels=[list(range(levels))] * n,
        action_labels=[list(_POWER_ACTIONS)] * n,
        kernels=[kernel] * n,
        reward_fns=bundle.fns,
        rho=InitialDistribution.fixed(start),
        gamma=gamma,
        kappa_r=1,
        batch_rewards=None,
        reward_ref=("power_control", params),
    )


register_reward_family("path_planning", _path_reward_bundle)
register_reward_family("power_control", _power_reward_bundle)
