"""User feature encodings and Lloyd's k-means with k-means++ seeding."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp

from ..dataset import Dataset
from .base import ClusterSet, ClusteringTimeout

FeatureKind = Literal["interaction_count", "item_vector"]


@dataclass(frozen=True, eq=False)
class UserFeatures:
    kind: FeatureKind
    matrix: np.ndarray | sp.csr_matrix

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]


def features_interaction_count(dataset: Dataset) -> UserFeatures:
    counts = dataset.user_degrees().astype(np.float64)
    return UserFeatures("interaction_count", counts.reshape(-1, 1))


def features_item_vector(dataset: Dataset) -> UserFeatures:
    """Binary item row with the user's interaction count appended."""
    X = dataset.matrix
    counts = sp.csr_matrix(dataset.user_degrees().astype(np.float64).reshape(-1, 1))
    return UserFeatures("item_vector", sp.hstack([X, counts], format="csr"))


@dataclass
class KMeansFit:
    labels: np.ndarray
    centers: np.ndarray
    n_iter: int
    converged: bool
    sse_history: list[float] = field(default_factory=list)

    @property
    def inertia(self) -> float:
        return self.sse_history[-1] if self.sse_history else float("nan")


def _sq_dists(X, x_sq: np.ndarray, C: np.ndarray) -> np.ndarray:
    # ||x||^2 + ||c||^2 - 2 x.c ; works for sparse X without densifying
    cross = X @ C.T
    d = x_sq[:, None] + (C * C).sum(axis=1)[None, :] - 2.0 * np.asarray(cross)
    np.maximum(d, 0.0, out=d)
    return d


def _row(X, i: int) -> np.ndarray:
    r = X[i]
    return r.toarray().ravel() if sp.issparse(r) else np.asarray(r, dtype=np.float64).ravel()


def _kmeanspp(X, x_sq: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centers[0] = _row(X, first)
    closest = _sq_dists(X, x_sq, centers[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            # fewer distinct points than k; empty-cluster repair handles the rest
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[c] = _row(X, idx)
        closest = np.minimum(closest, _sq_dists(X, x_sq, centers[c:c + 1])[:, 0])
    return centers


def _means(X, labels: np.ndarray, k: int, previous: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    ind = sp.csr_matrix((np.ones(n), (labels, np.arange(n))), shape=(k, n))
    sums = np.asarray((ind @ X).todense()) if sp.issparse(X) else ind @ X
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    out = previous.copy()
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


def _repair_empty(d: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Give each empty cluster the point farthest from its own centroid."""
    labels = labels.copy()
    for c in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[c] > 0:
            continue
        own = d[np.arange(len(labels)), labels].copy()
        own[counts[labels] <= 1] = -1.0
        far = int(np.argmax(own))
        if own[far] < 0:
            break
        labels[far] = c
    return labels


def _sse(X, x_sq, labels, centers) -> float:
    d = _sq_dists(X, x_sq, centers)
    return float(d[np.arange(len(labels)), labels].sum())


def lloyd(features: UserFeatures | np.ndarray | sp.spmatrix, k: int, seed: int = 0,
          max_iter: int = 300, tol: float = 1e-12, deadline: float | None = None) -> KMeansFit:
    """Lloyd iterations until the assignment stops changing.

    ``sse_history`` holds the within-cluster SSE after every centroid
    update; it is non-increasing.
    """
    X = features.matrix if isinstance(features, UserFeatures) else features
    X = sp.csr_matrix(X, dtype=np.float64) if sp.issparse(X) else np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n = X.shape[0]
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of users ({n})")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    x_sq = np.asarray(X.multiply(X).sum(axis=1)).ravel() if sp.issparse(X) else (X * X).sum(axis=1)
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(X, x_sq, k, rng)
    labels = None
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if deadline is not None and time.monotonic() > deadline:
            raise ClusteringTimeout("k-means exceeded the clustering time limit")
        d = _sq_dists(X, x_sq, centers)
        new = _repair_empty(d, np.argmin(d, axis=1), k)
        if labels is not None and np.array_equal(new, labels):
            converged = True
            break
        labels = new
        new_centers = _means(X, labels, k, centers)
        shift = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        history.append(_sse(X, x_sq, labels, centers))
        if shift <= tol:
            converged = True
            break
    return KMeansFit(labels, centers, it, converged, history)


def kmeans(features: UserFeatures, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-12,
           deadline: float | None = None) -> ClusterSet:
    fit = lloyd(features, k, seed=seed, max_iter=max_iter, tol=tol, deadline=deadline)
    approach = "kmeans_count" if features.kind == "interaction_count" else "kmeans_itemvec"
    return ClusterSet.from_labels(approach, {"k": k}, fit.labels)
