"""Bipartite user-item graph and (generalised) modularity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..dataset import Dataset


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected weighted graph in CSR form.

    ``adj`` is symmetric with an empty diagonal; self-loop weights live in
    ``loops`` (a loop of weight w adds 2w to its node's degree).
    """

    adj: sp.csr_matrix
    loops: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.adj.shape[0]

    @property
    def degree(self) -> np.ndarray:
        return np.asarray(self.adj.sum(axis=1)).ravel() + 2.0 * self.loops

    @property
    def total_weight(self) -> float:
        return float(self.adj.sum()) / 2.0 + float(self.loops.sum())

    @classmethod
    def from_edges(cls, n: int, edges, weights=None) -> "WeightedGraph":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        w = np.ones(len(edges)) if weights is None else np.asarray(weights, dtype=np.float64)
        loops = np.zeros(n)
        self_mask = edges[:, 0] == edges[:, 1]
        np.add.at(loops, edges[self_mask, 0], w[self_mask])
        e, w = edges[~self_mask], w[~self_mask]
        adj = sp.csr_matrix((np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]),
                                                     np.concatenate([e[:, 1], e[:, 0]]))), shape=(n, n))
        adj.sum_duplicates()
        adj.sort_indices()
        return cls(adj, loops)


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """User nodes 0..U-1, item nodes U..U+I-1, one edge per interaction."""

    n_user_nodes: int
    n_item_nodes: int
    graph: WeightedGraph

    @property
    def n_nodes(self) -> int:
        return self.n_user_nodes + self.n_item_nodes

    @property
    def m(self) -> int:
        return int(round(self.graph.total_weight))

    @property
    def degree(self) -> np.ndarray:
        return self.graph.degree.astype(np.int64)

    def neighbors(self, node: int) -> np.ndarray:
        a = self.graph.adj
        return a.indices[a.indptr[node]:a.indptr[node + 1]]


def build_graph(dataset: Dataset) -> BipartiteGraph:
    U, I = dataset.n_users, dataset.n_items
    if dataset.n_interactions == 0:
        raise ValueError("cannot build a graph from an empty dataset")
    X = sp.csr_matrix(dataset.matrix)
    adj = sp.bmat([[None, X], [X.T, None]], format="csr", dtype=np.float64)
    adj.sort_indices()
    return BipartiteGraph(U, I, WeightedGraph(adj, np.zeros(U + I)))


def _as_weighted(graph) -> WeightedGraph:
    return graph.graph if isinstance(graph, BipartiteGraph) else graph


def modularity(graph, partition, resolution: float = 1.0) -> float:
    """Q = sum_c [ e_c / m - resolution * (d_c / 2m)^2 ].

    ``partition`` is a label per node (array or :class:`Partition`).
    """
    g = _as_weighted(graph)
    labels = np.asarray(getattr(partition, "community_of", partition))
    m = g.total_weight
    if m <= 0:
        raise ValueError("modularity is undefined for a graph without edges")
    _, lab = np.unique(labels, return_inverse=True)
    lab = lab.ravel()
    C = int(lab.max()) + 1
    coo = g.adj.tocoo()
    same = lab[coo.row] == lab[coo.col]
    intra = np.bincount(lab[coo.row[same]], weights=coo.data[same], minlength=C) / 2.0
    intra += np.bincount(lab, weights=g.loops, minlength=C)
    deg = np.bincount(lab, weights=g.degree, minlength=C)
    return float(np.sum(intra / m - resolution * (deg / (2.0 * m)) ** 2))
