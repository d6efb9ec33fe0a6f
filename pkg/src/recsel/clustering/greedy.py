"""Clauset-Newman-Moore greedy modularity agglomeration with a cluster cap."""

from __future__ import annotations

import heapq
import time
from typing import Callable

import numpy as np

from .base import ClusteringTimeout, Partition, canonical_labels
from .graph import WeightedGraph, _as_weighted

MergeHook = Callable[[WeightedGraph, np.ndarray, np.ndarray, float], None]


def _labels(members: dict[int, list[int]], n: int) -> np.ndarray:
    out = np.empty(n, dtype=np.int64)
    for c, nodes in members.items():
        out[nodes] = c
    return out


def greedy_modularity(graph, resolution: float = 1.0, best_n: int | None = None,
                      on_merge: MergeHook | None = None, deadline: float | None = None) -> Partition:
    """Merge the community pair with the largest modularity gain until none is positive.

    With ``best_n`` set, merging continues past the modularity peak until at
    most ``best_n`` communities remain. Ties go to the pair with the lowest
    ids. When no connected pair is left but the cap is still exceeded, the
    two lowest-degree communities are merged.
    """
    if best_n is not None and best_n < 1:
        raise ValueError("best_n must be positive")
    g = _as_weighted(graph)
    n = g.n_nodes
    m = g.total_weight
    if m <= 0:
        raise ValueError("graph has no edges")
    scale = resolution / (2.0 * m * m)
    cap = n if best_n is None else best_n
    deg = g.degree.tolist()
    indptr, indices, data = g.adj.indptr, g.adj.indices, g.adj.data
    links: dict[int, dict[int, float]] = {
        u: {int(v): float(w) for v, w in zip(indices[indptr[u]:indptr[u + 1]], data[indptr[u]:indptr[u + 1]])}
        for u in range(n)
    }
    members = {u: [u] for u in range(n)}
    version = [0] * n
    heap = [(-(w / m - scale * deg[u] * deg[v]), u, v, 0, 0)
            for u, nbrs in links.items() for v, w in nbrs.items() if u < v]
    heapq.heapify(heap)
    history = []
    steps = 0

    while len(members) > 1:
        steps += 1
        if deadline is not None and steps % 256 == 0 and time.monotonic() > deadline:
            raise ClusteringTimeout("greedy modularity exceeded the clustering time limit")
        pair = None
        while heap:
            negdq, a, b, va, vb = heapq.heappop(heap)
            if a in members and b in members and version[a] == va and version[b] == vb:
                pair = (-negdq, a, b)
                break
        if pair is None:
            if len(members) <= cap:
                break
            # disconnected leftovers: merge the two smallest-degree communities
            a, b = sorted(sorted(members, key=lambda c: (deg[c], c))[:2])
            pair = (-scale * deg[a] * deg[b], a, b)
        dq, a, b = pair
        if dq < 0 and len(members) <= cap:
            break
        keep, gone = (a, b) if len(links[a]) >= len(links[b]) else (b, a)
        before = _labels(members, n) if on_merge is not None else None
        for x, w in links.pop(gone).items():
            if x == keep:
                continue
            nw = links[keep].get(x, 0.0) + w
            links[keep][x] = nw
            links[x][keep] = nw
            del links[x][gone]
        links[keep].pop(gone, None)
        deg[keep] += deg[gone]
        members[keep].extend(members.pop(gone))
        version[keep] += 1
        vk = version[keep]
        for x, w in links[keep].items():
            lo, hi = (keep, x) if keep < x else (x, keep)
            heapq.heappush(heap, (-(w / m - scale * deg[keep] * deg[x]), lo, hi,
                                  version[lo] if lo != keep else vk, version[hi] if hi != keep else vk))
        history.append(dq)
        if on_merge is not None:
            on_merge(g, before, _labels(members, n), dq)

    return Partition(canonical_labels(_labels(members, n)), resolution, history)
