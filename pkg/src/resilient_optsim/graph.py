"""Weighted undirected communication graphs and resilience predicates.

Node indices in this module are 0-based.  The scenario file format uses
1-based indices; :meth:`Graph.from_edges` converts.

The ``(r, s)``-connectivity predicate here is the robustness-style
property over pairs of disjoint node sets (every pair must contain a set
whose members all see ``r`` outsiders, or enough such members in total).
It is *not* classical vertex connectivity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components


@dataclass(frozen=True)
class Graph:
    node_count: int
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        if w.shape != (self.node_count, self.node_count):
            raise ValueError(f"weights must be {self.node_count}x{self.node_count}, got {w.shape}")
        if np.any(w < 0):
            raise ValueError("edge weights must be nonnegative")
        if not np.array_equal(w, w.T):
            raise ValueError("weights must be symmetric")
        if np.any(np.diag(w) != 0):
            raise ValueError("self loops are not allowed")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[Sequence[float]],
        node_count: int | None = None,
        one_based: bool = True,
    ) -> "Graph":
        """Build a graph from ``(i, j)`` or ``(i, j, weight)`` tuples."""
        triples = []
        for e in edges:
            if len(e) not in (2, 3):
                raise ValueError(f"malformed edge {e!r}")
            i, j = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) == 3 else 1.0
            if one_based:
                i, j = i - 1, j - 1
            if i < 0 or j < 0 or i == j:
                raise ValueError(f"malformed edge {e!r}")
            triples.append((i, j, w))
        n = node_count
        if n is None:
            n = 1 + max((max(i, j) for i, j, _ in triples), default=0)
        mat = np.zeros((n, n))
        for i, j, w in triples:
            if i >= n or j >= n:
                raise ValueError(f"edge ({i}, {j}) references a missing node")
            mat[i, j] = mat[j, i] = w
        return cls(n, mat)

    def neighbors(self, i: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.weights[i] > 0).tolist())

    def edges(self) -> list[tuple[int, int, float]]:
        """Undirected edges as ``(i, j, w)`` with ``i < j``."""
        iu, ju = np.nonzero(np.triu(self.weights) > 0)
        return [(int(i), int(j), float(self.weights[i, j])) for i, j in zip(iu, ju)]

    def without_edge(self, i: int, j: int) -> "Graph":
        w = self.weights.copy()
        w[i, j] = w[j, i] = 0.0
        return Graph(self.node_count, w)

    def induced(self, keep: Iterable[int]) -> "Graph":
        idx = sorted(set(keep))
        return Graph(len(idx), self.weights[np.ix_(idx, idx)])


@dataclass(frozen=True)
class SpectralSummary:
    laplacian: np.ndarray
    lambda2: float
    is_connected: bool
    max_degree: float


def is_connected(g: Graph) -> bool:
    if g.node_count == 1:
        return True
    n_comp, _ = connected_components(g.weights > 0, directed=False)
    return n_comp == 1


def laplacian(g: Graph) -> SpectralSummary:
    """Laplacian ``D - A`` with its algebraic connectivity.

    ``lambda2`` is reported as exactly 0 for disconnected graphs and for
    the single-node graph.
    """
    degrees = g.weights.sum(axis=1)
    lap = np.diag(degrees) - g.weights
    connected = is_connected(g)
    lam2 = 0.0
    if g.node_count >= 2 and connected:
        eig = np.linalg.eigvalsh(lap)
        lam2 = float(max(eig[1], 0.0))
    return SpectralSummary(
        laplacian=lap,
        lambda2=lam2,
        is_connected=connected,
        max_degree=float(degrees.max()),
    )


def r_reachable(g: Graph, subset: Iterable[int], r: int) -> bool:
    """True iff some node of ``subset`` has at least ``r`` neighbours outside it."""
    members = frozenset(subset)
    if not members:
        raise ValueError("subset must be nonempty")
    if not members <= frozenset(range(g.node_count)):
        raise ValueError("subset contains unknown nodes")
    return any(len(g.neighbors(i) - members) >= r for i in members)


def _reach_counts(g: Graph, r: int) -> np.ndarray:
    """``out[mask]`` = number of nodes in ``mask`` with >= r neighbours outside it."""
    n = g.node_count
    nbr_masks = [sum(1 << j for j in g.neighbors(i)) for i in range(n)]
    out = np.zeros(1 << n, dtype=np.int64)
    for mask in range(1, 1 << n):
        count = 0
        outside = ~mask
        for i in range(n):
            if mask >> i & 1 and (nbr_masks[i] & outside).bit_count() >= r:
                count += 1
        out[mask] = count
    return out


def rs_connected(g: Graph, r: int, s: int = 1) -> bool:
    """Exhaustive ``(r, s)``-connectivity check.

    Cost is ``O(3^N)``; intended for ``N <= 12``.
    """
    n = g.node_count
    if n < 2:
        raise ValueError("rs_connected needs at least two nodes")
    if r < 1 or s < 1:
        raise ValueError("r and s must be positive")
    reach = _reach_counts(g, r)
    sizes = [m.bit_count() for m in range(1 << n)]
    full = (1 << n) - 1
    for x1 in range(1, full + 1):
        d1 = int(reach[x1])
        if d1 == sizes[x1]:
            continue
        rest = full & ~x1
        # enumerate nonempty submasks of the complement
        x2 = rest
        while x2:
            d2 = int(reach[x2])
            if d2 != sizes[x2] and d1 + d2 < s:
                return False
            x2 = (x2 - 1) & rest
    return True


def r_connected(g: Graph, r: int) -> bool:
    """Synonym for ``rs_connected(g, r, 1)``."""
    return rs_connected(g, r, 1)


def r_isolatable(g: Graph, r: int) -> bool:
    """True iff removing any 1..r nodes leaves the remaining graph connected."""
    n = g.node_count
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r >= n:
        raise ValueError(f"r={r} must be smaller than the node count {n}")
    if not is_connected(g):
        return False
    nodes = range(n)
    for size in range(1, r + 1):
        for removed in itertools.combinations(nodes, size):
            rest = [v for v in nodes if v not in removed]
            if not is_connected(g.induced(rest)):
                return False
    return True
