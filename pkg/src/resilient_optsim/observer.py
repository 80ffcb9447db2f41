"""Distributed optimization observer: delta / w / c dynamics and diagnostics.

The coupling between agents ``i`` and ``j`` only ever sees *sampled*
values: ``sent`` is what ``i`` last transmitted to ``j`` (its true value at
that trigger), ``recv`` is what ``i`` last received from ``j`` (tampered if
``j`` is Byzantine).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .plant import AgentModel


@dataclass(frozen=True)
class CostFunction:
    """Strongly convex local cost on the output space.

    ``lipschitz_bound`` bounds ``|grad(a) - grad(b)|^2 / |a - b|^2``.
    """

    kind: str
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz_bound: float
    center: np.ndarray | None = None
    weight: float = 1.0

    @classmethod
    def quadratic(cls, center, weight: float = 1.0) -> "CostFunction":
        r = np.asarray(center, dtype=float)
        if weight <= 0:
            raise ValueError("quadratic weight must be positive")

        def value(y):
            d = np.asarray(y, dtype=float) - r
            return float(weight * d @ d)

        def gradient(y):
            return 2.0 * weight * (np.asarray(y, dtype=float) - r)

        return cls("quadratic", value, gradient, 4.0 * weight**2, center=r, weight=weight)

    @classmethod
    def custom(cls, value, gradient, lipschitz_bound: float) -> "CostFunction":
        return cls("custom", value, gradient, float(lipschitz_bound))


def spot_check_lipschitz(cost: CostFunction, points: np.ndarray, rng=None, pairs: int = 200) -> bool:
    """Check the gradient bound on random pairs drawn from ``points``."""
    rng = np.random.default_rng(0) if rng is None else rng
    pts = np.atleast_2d(points)
    for _ in range(pairs):
        a, b = pts[rng.integers(len(pts))], pts[rng.integers(len(pts))]
        gap = float(np.sum((a - b) ** 2))
        if gap == 0.0:
            continue
        if float(np.sum((cost.gradient(a) - cost.gradient(b)) ** 2)) > cost.lipschitz_bound * gap * (1 + 1e-12):
            return False
    return True


@dataclass(frozen=True)
class ObserverGains:
    rho: float
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if min(self.rho, self.alpha, self.beta) <= 0:
            raise ValueError("rho, alpha, beta must be positive")


@dataclass
class ObserverState:
    delta: np.ndarray
    w: np.ndarray
    c: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class NeighborSample:
    """What agent ``i`` holds about the edge to neighbour ``j``."""

    sent_delta: np.ndarray
    sent_w: np.ndarray
    recv_delta: np.ndarray
    recv_w: np.ndarray
    c_hat: float
    C_neighbor: np.ndarray


class ProtocolError(RuntimeError):
    pass


def observer_rates(
    model: AgentModel,
    cost: CostFunction,
    st: ObserverState,
    adjacency: Mapping[int, float],
    samples: Mapping[int, NeighborSample],
    gains: ObserverGains,
) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side of the delta and w dynamics for one agent.

    ``adjacency`` is the agent's private view ``j -> a_ij``; entries with
    ``a_ij == 0`` (isolated neighbours) are skipped.
    """
    C = model.C
    q = C.shape[0]
    coupling_delta = np.zeros(q)
    coupling_w = np.zeros(q)
    for j, a_ij in adjacency.items():
        if a_ij <= 0:
            continue
        if j not in samples:
            raise ProtocolError(f"no sample held for active neighbour {j}")
        s = samples[j]
        coupling_delta += a_ij * s.c_hat * (C @ s.sent_delta - s.C_neighbor @ s.recv_delta)
        coupling_w += a_ij * (C @ s.sent_w - s.C_neighbor @ s.recv_w)
    grad = cost.gradient(C @ st.delta)
    delta_dot = -gains.rho * C.T @ grad - gains.alpha * C.T @ coupling_delta - gains.beta * C.T @ coupling_w
    w_dot = gains.alpha * C.T @ coupling_delta
    return delta_dot, w_dot


def weight_rate(eta: float, own_output_sample, neighbor_output_sample) -> float:
    """Growth rate of the adaptive coupling weight, ``eta |Ci d_ji - Cj d_ij|^2``."""
    diff = np.asarray(own_output_sample, dtype=float) - np.asarray(neighbor_output_sample, dtype=float)
    return float(eta * diff @ diff)


def optimality_residual(
    deltas: Sequence[np.ndarray],
    models: Sequence[AgentModel],
    costs: Sequence[CostFunction],
) -> dict[str, float]:
    """Stationarity and consensus residuals over a set of normal agents."""
    if not deltas:
        raise ValueError("need at least one agent")
    outputs = [m.C @ d for m, d in zip(models, deltas)]
    if len({m.n for m in models}) == 1:
        kkt = sum(m.C.T @ f.gradient(y) for m, f, y in zip(models, costs, outputs))
    else:
        # state spaces differ; C_i^T g cannot be summed, use the output space
        kkt = sum(f.gradient(y) for f, y in zip(costs, outputs))
    consensus = 0.0
    for a in range(len(outputs)):
        for b in range(a + 1, len(outputs)):
            consensus = max(consensus, float(np.linalg.norm(outputs[a] - outputs[b])))
    return {"kkt_norm": float(np.linalg.norm(kkt)), "consensus_norm": consensus}
