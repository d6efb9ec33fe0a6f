from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

APPROACHES = ("kmeans_count", "kmeans_itemvec", "louvain", "greedy_modularity")
CLUSTER_COUNTS = tuple(range(2, 9))
RESOLUTIONS = (0.8, 0.9, 1.0, 1.1, 1.2)


class ClusteringTimeout(RuntimeError):
    pass


def canonical_labels(labels) -> np.ndarray:
    """Renumber labels 0..C-1 in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse.ravel()]


@dataclass(frozen=True, eq=False)
class ClusterSet:
    """A disjoint partition of all users, with the config that produced it."""

    approach: str
    params: dict[str, Any]
    assignment: np.ndarray

    @classmethod
    def from_labels(cls, approach: str, params: dict[str, Any], labels) -> "ClusterSet":
        return cls(approach, dict(params), canonical_labels(labels))

    @property
    def n_clusters(self) -> int:
        return int(self.assignment.max()) + 1 if len(self.assignment) else 0

    @property
    def populations(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_clusters)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == c)

    def to_dict(self) -> dict:
        return {
            "approach": self.approach,
            "params": {k: self.params[k] for k in sorted(self.params)},
            "n_clusters": self.n_clusters,
            "assignment": [int(a) for a in self.assignment],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterSet":
        cs = cls.from_labels(d["approach"], d.get("params", {}), np.asarray(d["assignment"], dtype=np.int64))
        if "n_clusters" in d and d["n_clusters"] != cs.n_clusters:
            raise ValueError("n_clusters does not match the assignment")
        return cs


@dataclass(frozen=True, eq=False)
class Partition:
    """Community id per graph node (users first, then items)."""

    community_of: np.ndarray
    resolution: float = 1.0
    history: list = field(default_factory=list, repr=False)

    @property
    def n_communities(self) -> int:
        return len(np.unique(self.community_of))


def extract_user_clusters(partition: Partition, n_users: int, approach: str,
                          params: dict[str, Any]) -> ClusterSet:
    """Drop item nodes; item-only communities vanish, the rest are renumbered."""
    users = np.asarray(partition.community_of[:n_users])
    if n_users == 0:
        raise ValueError("partition has no user nodes")
    return ClusterSet.from_labels(approach, params, users)


def enumerate_configs(approach: str, counts=CLUSTER_COUNTS, resolutions=RESOLUTIONS) -> list[tuple[str, dict]]:
    if approach in ("kmeans_count", "kmeans_itemvec"):
        return [(approach, {"k": k}) for k in counts]
    if approach == "louvain":
        return [(approach, {"resolution": r}) for r in resolutions]
    if approach == "greedy_modularity":
        return [(approach, {"k": k, "resolution": r}) for k in counts for r in resolutions]
    raise ValueError(f"unknown clustering approach {approach!r}")
