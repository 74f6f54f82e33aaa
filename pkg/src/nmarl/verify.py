"""Oracle-backed verification suite behind the ``verify`` CLI subcommand.

Every check recomputes its expected values from the exact dynamic-programming
evaluators or closed forms, independent of the sampling paths it certifies.
``quick`` covers the deterministic identities; ``full`` adds the large
statistical checks (estimator unbiasedness and the conditional return mean).
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np

from . import estimator, netgraph, oracle, pushsum
from .model import FactoredNmarlModel, InitialDistribution
from .policy import CoupledSoftmaxPolicy, MixingSpec


def _random_model(
    g: netgraph.AgentGraph,
    rng: np.random.Generator,
    gamma: float = 0.9,
    fixed_start: bool = False,
) -> FactoredNmarlModel:
    n = g.n
    kernels = []
    for _ in range(n):
        k = rng.random((2, 2, 2)) + 0.1
        kernels.append(k / k.sum(axis=-1, keepdims=True))
    fns = []
    for i in range(n):
        members = netgraph.khop(g, i, 1).members
        table = rng.uniform(-1, 1, size=(2,) * (2 * len(members)))
        fns.append(lambda s, a, table=table: float(table[tuple(s) + tuple(a)]))
    rho = (
        InitialDistribution.fixed([0] * n)
        if fixed_start
        else InitialDistribution.product([np.array([0.5, 0.5])] * n)
    )
    return FactoredNmarlModel(
        g, [[0, 1]] * n, [[0, 1]] * n, kernels, fns, rho, gamma
    )


def check_value_decomposition(seed: int = 101) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    g = netgraph.build_graph(3, [(1, 2), (2, 3)])
    m = _random_model(g, rng)
    pol = CoupledSoftmaxPolicy(g, 2, 2, MixingSpec(kappa_p=1))
    tables = pol.prob_tables(rng.uniform(-1, 1, size=(3, 4)))
    worst = 0.0
    for s in itertools.product(range(2), repeat=3):
        for a in itertools.product(range(2), repeat=3):
            total = sum(
                oracle.local_q_value(
                    m, tables, i,
                    [s[j] for j in m.reward_members[i]],
                    [a[j] for j in m.reward_members[i]],
                )
                for i in range(3)
            )
            worst = max(worst, abs(oracle.global_q_value(m, tables, s, a) - total / 3))
    return worst <= 1e-6, f"max decomposition gap {worst:.3e} over 64 pairs"


def check_gradient_forms(seed: int = 202, draws: int = 3) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    g = netgraph.build_graph(3, [(1, 2), (2, 3)])
    m = _random_model(g, rng)
    pol = CoupledSoftmaxPolicy(g, 2, 2, MixingSpec(kappa_p=1))
    worst_pair = worst_fd = 0.0
    for _ in range(draws):
        theta = rng.uniform(-1, 1, size=(3, 4))
        for i in range(3):
            g1 = oracle.gradient_via_local_q(m, pol, theta, i)
            g2 = oracle.gradient_via_averaged_q(m, pol, theta, i)
            worst_pair = max(worst_pair, float(np.max(np.abs(g1 - g2))))
        fd = oracle.finite_difference_gradient(m, pol, theta, 0, h=1e-5)
        g1 = oracle.gradient_via_local_q(m, pol, theta, 0)
        worst_fd = max(
            worst_fd,
            float(np.max(np.abs(fd - g1) / np.maximum(np.abs(g1), 1e-4))),
        )
    ok = worst_pair <= 1e-6 and worst_fd <= 1e-4
    return ok, f"form gap {worst_pair:.3e}, fd relative gap {worst_fd:.3e}"


def check_pushsum(seed: int = 303, rounds: int = 300) -> tuple[bool, str]:
    g = netgraph.ring_graph(10)
    w = netgraph.weight_matrix(g)
    rng = np.random.default_rng(seed)
    st = pushsum.init_state(10, 4)
    theta = np.zeros((10, 4))
    for t in range(1, rounds + 1):
        pushsum.mix_and_estimate(st, w)
        pushsum.check_invariants(st, theta)
        deltas = rng.normal(size=(10, 4)) / (t + 10)
        theta = theta + deltas
        pushsum.inject_all(st, w, deltas)
        pushsum.check_invariants(st, theta)

    st = pushsum.init_state(10, 4)
    theta = np.zeros((10, 4))
    errs = []
    zero = np.zeros((10, 4))
    for t in range(1, 201):
        pushsum.mix_and_estimate(st, w)
        errs.append(pushsum.consensus_error(st, theta))
        deltas = rng.normal(size=(10, 4)) if t == 1 else zero
        theta = theta + deltas
        pushsum.inject_all(st, w, deltas)
    ts = np.arange(10, 201)
    ys = np.log([errs[t - 1] for t in ts])
    a = np.vstack([ts, np.ones_like(ts)]).T
    coef, *_ = np.linalg.lstsq(a, ys, rcond=None)
    r2 = 1 - ((ys - a @ coef) ** 2).sum() / ((ys - ys.mean()) ** 2).sum()
    lam = math.exp(coef[0])
    ok = lam < 1.0 and r2 > 0.99
    return ok, f"invariants held {rounds} rounds; static decay rate {lam:.4f}, R2 {r2:.5f}"


def check_geometric_sampler(seed: int = 404, draws: int = 100_000) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    p = 0.1
    samples = np.array([estimator.sample_geometric(p, rng) for _ in range(draws)])
    mean_sigma = math.sqrt((1 - p) / p**2 / draws)
    mean_ok = abs(samples.mean() - (1 - p) / p) < 4 * mean_sigma
    zero_sigma = math.sqrt(p * (1 - p) / draws)
    zero_ok = abs((samples == 0).mean() - p) < 4 * zero_sigma

    gamma = 0.6
    xs = rng.uniform(-1, 1, size=201)
    q = 1.0 - math.sqrt(gamma)
    weights = estimator.half_discount_weights(gamma, 201)
    partial = np.cumsum(weights * xs)
    pmf = q * (1 - q) ** np.arange(201)
    identity_gap = abs(float(pmf @ partial) - float(np.sum(gamma ** np.arange(201) * xs)))
    ok = mean_ok and zero_ok and identity_gap <= 1e-8
    return ok, (
        f"mean {samples.mean():.3f} (target 9), P(0) {(samples == 0).mean():.4f} "
        f"(target {p}), truncation identity gap {identity_gap:.2e}"
    )


def check_policy_scores(seed: int = 505, draws: int = 200) -> tuple[bool, str]:
    g = netgraph.build_graph(5, [(k, k + 1) for k in range(1, 5)])
    pol = CoupledSoftmaxPolicy(g, 2, 3, MixingSpec(kappa_p=1))
    rng = np.random.default_rng(seed)
    worst_norm = worst_mean = 0.0
    for _ in range(draws):
        theta = rng.uniform(-5, 5, size=(5, 6))
        probs = pol.action_probs(2, 1, theta)
        worst_norm = max(worst_norm, abs(float(probs.sum()) - 1.0))
        mean = sum(probs[a] * pol.score(1, 2, 1, a, theta) for a in range(3))
        worst_mean = max(worst_mean, float(np.max(np.abs(mean))))
    ok = worst_norm <= 1e-12 and worst_mean <= 1e-12
    return ok, f"normalization gap {worst_norm:.2e}, score mean {worst_mean:.2e}"


def check_estimator_unbiased(
    seed: int = 606, samples: int = 200_000
) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    g = netgraph.build_graph(2, [(1, 2)])
    m = _random_model(g, rng, gamma=0.8, fixed_start=True)
    pol = CoupledSoftmaxPolicy(g, 2, 2, MixingSpec(kappa_p=1))
    est_params = rng.uniform(-0.5, 0.5, size=(2, 2, 4))
    targets = [oracle.gradient_via_averaged_q(m, pol, est_params, i) for i in range(2)]
    tables = pol.prob_tables(est_params)
    bound = estimator.estimate_bound(m, pol)
    acc = np.zeros((2, 4))
    acc_sq = np.zeros((2, 4))
    violations = 0
    srng = np.random.default_rng(seed + 1)
    for _ in range(samples):
        roll = estimator.rollout_two_horizon(m, est_params, pol, srng, tables=tables)
        ge = estimator.gradient_estimate(roll, m, pol, est_params, bound)
        if np.any(ge.norms > bound * (1 + 1e-9)):
            violations += 1
        acc += ge.grads
        acc_sq += ge.grads**2
    mean = acc / samples
    se = np.sqrt(np.maximum(acc_sq / samples - mean**2, 0.0) / samples)
    worst_z = 0.0
    for i in range(2):
        worst_z = max(worst_z, float(np.max(np.abs(mean[i] - targets[i]) / se[i])))
    ok = worst_z <= 4.0 and violations == 0
    return ok, f"worst |z| {worst_z:.2f} over {samples} samples, {violations} bound violations"


def check_conditional_q_mean(
    seed: int = 707, samples: int = 100_000
) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    g = netgraph.build_graph(2, [(1, 2)])
    m = _random_model(g, rng, gamma=0.8, fixed_start=True)
    pol = CoupledSoftmaxPolicy(g, 2, 2, MixingSpec(kappa_p=1))
    est_params = rng.uniform(-0.5, 0.5, size=(2, 2, 4))
    tables = pol.prob_tables(est_params)
    snap_s, snap_a = (0, 1), (1, 0)
    target = oracle.neighbors_averaged_q(m, tables, 0, snap_s, snap_a, kappa_p=1)
    srng = np.random.default_rng(seed + 1)
    vals = np.fromiter(
        (
            estimator.sample_q_conditional(
                m, pol, est_params, snap_s, snap_a, 0, srng, tables=tables
            )
            for _ in range(samples)
        ),
        dtype=float,
        count=samples,
    )
    se = vals.std(ddof=1) / math.sqrt(samples)
    z = abs(vals.mean() - target) / se
    return z <= 4.0, f"|z| {z:.2f} over {samples} conditional resamples"


QUICK_CHECKS: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
    ("value_decomposition", check_value_decomposition),
    ("gradient_forms", check_gradient_forms),
    ("pushsum_invariants", check_pushsum),
    ("geometric_sampler", check_geometric_sampler),
    ("policy_scores", check_policy_scores),
]

FULL_CHECKS: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
    ("estimator_unbiased", check_estimator_unbiased),
    ("conditional_q_mean", check_conditional_q_mean),
]


def run_suite(level: str = "quick") -> dict:
    checks = list(QUICK_CHECKS)
    if level == "full":
        checks += FULL_CHECKS
    results = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {exc!r}"
        results.append({"name": name, "pass": bool(ok), "detail": detail})
    return {
        "level": level,
        "pass": all(r["pass"] for r in results),
        "checks": results,
    }
