"""User clustering: k-means on two encodings and modularity-based communities."""

from __future__ import annotations

import time

from .._seeding import derive_seed
from ..dataset import Dataset
from .base import (APPROACHES, CLUSTER_COUNTS, RESOLUTIONS, ClusterSet, ClusteringTimeout, Partition,
                   canonical_labels, enumerate_configs, extract_user_clusters)
from .graph import BipartiteGraph, WeightedGraph, build_graph, modularity
from .greedy import greedy_modularity
from .kmeans import (KMeansFit, UserFeatures, features_interaction_count, features_item_vector, kmeans,
                     lloyd)
from .louvain import aggregate, louvain

__all__ = [
    "APPROACHES", "CLUSTER_COUNTS", "RESOLUTIONS", "BipartiteGraph", "ClusterSet", "ClusteringTimeout",
    "KMeansFit", "Partition", "UserFeatures", "WeightedGraph", "aggregate", "build_graph",
    "canonical_labels", "cluster_users", "enumerate_configs", "extract_user_clusters",
    "features_interaction_count", "features_item_vector", "greedy_modularity", "kmeans", "lloyd",
    "louvain", "modularity",
]


def cluster_users(dataset: Dataset, approach: str, params: dict, seed: int = 42,
                  timeout: float | None = None) -> ClusterSet:
    """Run one clustering configuration with an RNG derived from its key."""
    deadline = None if timeout is None else time.monotonic() + timeout
    cseed = derive_seed(seed, approach, tuple(sorted(params.items())))
    if approach == "kmeans_count":
        return kmeans(features_interaction_count(dataset), params["k"], seed=cseed, deadline=deadline)
    if approach == "kmeans_itemvec":
        return kmeans(features_item_vector(dataset), params["k"], seed=cseed, deadline=deadline)
    graph = build_graph(dataset)
    if approach == "louvain":
        part = louvain(graph, params.get("resolution", 1.0), seed=cseed, deadline=deadline)
    elif approach == "greedy_modularity":
        part = greedy_modularity(graph, params.get("resolution", 1.0), best_n=params["k"], deadline=deadline)
    else:
        raise ValueError(f"unknown clustering approach {approach!r}")
    return extract_user_clusters(part, dataset.n_users, approach, params)
