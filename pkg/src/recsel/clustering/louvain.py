"""Two-phase Louvain community detection with a resolution parameter."""

from __future__ import annotations

import time
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .base import ClusteringTimeout, Partition, canonical_labels
from .graph import WeightedGraph, _as_weighted, modularity

# minimum modularity gain for a move to count as an improvement
MIN_GAIN = 1e-12

MoveHook = Callable[[WeightedGraph, np.ndarray, np.ndarray, float], None]


def _local_moving(g: WeightedGraph, resolution: float, rng: np.random.Generator,
                  on_move: MoveHook | None, deadline: float | None) -> tuple[np.ndarray, bool]:
    n = g.n_nodes
    indptr = g.adj.indptr.tolist()
    indices = g.adj.indices.tolist()
    data = g.adj.data.tolist()
    k = g.degree.tolist()
    m = g.total_weight
    scale = resolution / (2.0 * m * m)
    comm = list(range(n))
    tot = list(k)
    order = rng.permutation(n).tolist()
    moved = False
    while True:
        moves = 0
        if deadline is not None and time.monotonic() > deadline:
            raise ClusteringTimeout("louvain exceeded the clustering time limit")
        for i in order:
            ci, ki = comm[i], k[i]
            links: dict[int, float] = {}
            for p in range(indptr[i], indptr[i + 1]):
                c = comm[indices[p]]
                links[c] = links.get(c, 0.0) + data[p]
            tot[ci] -= ki
            stay = links.get(ci, 0.0) / m - scale * tot[ci] * ki
            best_c, best = -1, -np.inf
            for c, w in links.items():
                if c == ci:
                    continue
                gain = w / m - scale * tot[c] * ki
                if gain > best or (gain == best and c < best_c):
                    best_c, best = c, gain
            if best_c >= 0 and best - stay > MIN_GAIN:
                before = np.array(comm) if on_move is not None else None
                comm[i] = best_c
                tot[best_c] += ki
                moves += 1
                if on_move is not None:
                    on_move(g, before, np.array(comm), best - stay)
            else:
                tot[ci] += ki
        if moves == 0:
            break
        moved = True
    return np.asarray(comm), moved


def aggregate(g: WeightedGraph, labels: np.ndarray) -> WeightedGraph:
    """Collapse each community into one node; internal edges become loops."""
    n, C = g.n_nodes, int(labels.max()) + 1
    P = sp.csr_matrix((np.ones(n), (np.arange(n), labels)), shape=(n, C))
    A = (P.T @ g.adj @ P).tocsr()
    loops = A.diagonal() / 2.0 + np.bincount(labels, weights=g.loops, minlength=C)
    A.setdiag(0.0)
    A.eliminate_zeros()
    A.sort_indices()
    return WeightedGraph(A, loops)


def louvain(graph, resolution: float = 1.0, seed: int = 0, on_move: MoveHook | None = None,
            deadline: float | None = None) -> Partition:
    """Louvain method; node order is shuffled once per level from ``seed``.

    Ties between candidate communities go to the smallest community id. The
    returned partition covers the original nodes and records the modularity
    reached after each level in ``history``.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    g0 = _as_weighted(graph)
    g = g0
    rng = np.random.default_rng(seed)
    membership = np.arange(g0.n_nodes)
    history = []
    while True:
        comm, moved = _local_moving(g, resolution, rng, on_move, deadline)
        if not moved:
            break
        comm = canonical_labels(comm)
        membership = comm[membership]
        history.append(modularity(g0, membership, resolution))
        g = aggregate(g, comm)
    return Partition(canonical_labels(membership), resolution, history)
