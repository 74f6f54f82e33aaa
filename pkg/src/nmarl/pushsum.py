"""Push-sum tracking of every agent's policy parameters.

Each agent ``i`` carries a scalar weight ``p_i`` (all 1 at start) and, per
target agent ``j``, an intermediate vector ``breve[i, j]`` (zero at start).
A mixing round replaces the weights by ``W p`` and reads off the estimates

    estimates[i, j] = (W breve[:, j])_i / (W p)_i,

note the skew: the estimate divides by the *advanced* weight. Parameter
changes enter through the owner's intermediate vector, scaled by the agent
count, and are mixed in the same round:

    breve[:, j] <- W (breve[:, j] + n * delta_j * e_j).

Because ``W`` is column stochastic, two exact invariants hold at every
step: the weights sum to ``n``, and the per-target mean of the intermediate
vectors equals the target's true parameter. Target columns never interact,
so injecting one column at a time or all in one sweep is the same
operation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonPositiveWeight, ProtocolInvariantError

MASS_TOL = 1e-10


@dataclass
class PushSumState:
    """Mutable protocol state: weights, intermediate vectors, estimates.

    ``breve[i, j]`` is agent ``i``'s intermediate vector for agent ``j``;
    ``estimates[i, j]`` is agent ``i``'s current estimate of ``j``'s
    parameters, refreshed by :func:`mix_and_estimate`.
    """

    weights: np.ndarray  # (n,)
    breve: np.ndarray  # (n, n, d)
    estimates: np.ndarray  # (n, n, d)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def init_state(n: int, d: int) -> PushSumState:
    return PushSumState(
        weights=np.ones(n),
        breve=np.zeros((n, n, d)),
        estimates=np.zeros((n, n, d)),
    )


def mix_and_estimate(st: PushSumState, w: np.ndarray) -> PushSumState:
    """One mixing round: advance the weights, refresh the estimates.

    The intermediate vectors are left untouched; they advance in
    :func:`inject`, which shares the same mixing matrix multiplication.
    """
    n = st.n
    if w.shape != (n, n):
        raise DimensionMismatch(f"weight matrix shape {w.shape}, expected {(n, n)}")
    new_weights = w @ st.weights
    if np.any(new_weights <= 0.0):
        raise NonPositiveWeight(
            "push-sum weight became non-positive; mixing matrix lacks support"
        )
    mixed = (w @ st.breve.reshape(n, -1)).reshape(st.breve.shape)
    st.weights = new_weights
    st.estimates = mixed / new_weights[:, None, None]
    return st


def inject(st: PushSumState, w: np.ndarray, j: int, delta: np.ndarray) -> PushSumState:
    """Mix target ``j``'s column and add ``n * delta`` at the owner.

    Restores the per-target mean to the updated true parameter exactly
    (column stochasticity moves the whole injected mass once).
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != st.breve.shape[2:]:
        raise DimensionMismatch(
            f"delta has shape {delta.shape}, expected {st.breve.shape[2:]}"
        )
    if not np.all(np.isfinite(delta)):
        raise DimensionMismatch("delta must be finite")
    column = st.breve[:, j, :].copy()
    column[j] += st.n * delta
    st.breve[:, j, :] = w @ column
    return st


def inject_all(st: PushSumState, w: np.ndarray, deltas: np.ndarray) -> PushSumState:
    """One synchronized sweep of :func:`inject` over every target agent."""
    deltas = np.asarray(deltas, dtype=float)
    n = st.n
    if deltas.shape != st.breve.shape[1:]:
        raise DimensionMismatch(
            f"deltas have shape {deltas.shape}, expected {st.breve.shape[1:]}"
        )
    if not np.all(np.isfinite(deltas)):
        raise DimensionMismatch("deltas must be finite")
    augmented = st.breve.copy()
    idx = np.arange(n)
    augmented[idx, idx, :] += n * deltas
    st.breve = (w @ augmented.reshape(n, -1)).reshape(st.breve.shape)
    return st


def consensus_error(st: PushSumState, theta: np.ndarray) -> float:
    """Worst-case estimate error ``max_{i,j} ||estimates[i, j] - theta[j]||``."""
    diff = st.estimates - theta[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


def check_invariants(st: PushSumState, theta: np.ndarray, tol: float = MASS_TOL) -> None:
    """Assert mass conservation and the per-target averaged property."""
    n = st.n
    mass_err = abs(float(st.weights.sum()) - n)
    if mass_err > tol:
        raise ProtocolInvariantError(f"weight mass deviates from {n} by {mass_err:.3e}")
    mean_err = float(np.max(np.abs(st.breve.mean(axis=0) - theta)))
    if mean_err > tol:
        raise ProtocolInvariantError(
            f"intermediate-vector means deviate from true parameters by {mean_err:.3e}"
        )
