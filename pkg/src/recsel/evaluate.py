"""Top-k ranking metrics, cluster aggregation and per-cluster winner selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

K = 10


def ndcg_at_k(ranked: Sequence[int], relevant: Iterable[int], k: int = K) -> float:
    """Binary-relevance nDCG with a log2(rank + 1) discount."""
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    if not relevant:
        return 0.0
    dcg = sum(1.0 / math.log2(p + 2) for p, item in enumerate(list(ranked)[:k]) if item in relevant)
    idcg = sum(1.0 / math.log2(p + 2) for p in range(min(k, len(relevant))))
    return dcg / idcg


def precision_at_k(ranked: Sequence[int], relevant: Iterable[int], k: int = K) -> float:
    """Hits in the top k divided by k, even when fewer than k items were returned."""
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    return sum(1 for item in list(ranked)[:k] if item in relevant) / k


@dataclass(frozen=True)
class UserMetric:
    user: int
    ndcg_at_10: float
    precision_at_10: float
    n_test_items: int


@dataclass
class ModelEvaluation:
    users: list[UserMetric]
    mean_ndcg: float
    mean_precision: float
    empty: bool = False

    @property
    def n_users(self) -> int:
        return len(self.users)


def eligible_users(train: sp.csr_matrix, test: sp.csr_matrix) -> np.ndarray:
    has_train = np.diff(sp.csr_matrix(train).indptr) > 0
    has_test = np.diff(sp.csr_matrix(test).indptr) > 0
    return np.flatnonzero(has_train & has_test)


def evaluate_model(model, train: sp.csr_matrix, test: sp.csr_matrix, k: int = K) -> ModelEvaluation:
    """Score every user with at least one train and one test interaction.

    ``train`` is the matrix the model was fitted on (its rows are excluded
    from recommendation); ``test`` holds the held-out items.
    """
    test = sp.csr_matrix(test)
    users = eligible_users(train, test)
    if len(users) == 0:
        return ModelEvaluation([], 0.0, 0.0, empty=True)
    metrics = []
    for tk in model.recommend_batch(users, k):
        rel = test.indices[test.indptr[tk.user]:test.indptr[tk.user + 1]]
        ranked = tk.items.tolist()
        metrics.append(UserMetric(tk.user, ndcg_at_k(ranked, rel, k), precision_at_k(ranked, rel, k), len(rel)))
    return ModelEvaluation(
        metrics,
        float(np.mean([m.ndcg_at_10 for m in metrics])),
        float(np.mean([m.precision_at_10 for m in metrics])),
    )


@dataclass
class ClusterScore:
    cluster: int
    population: int
    n_users_evaluated: float
    mean_ndcg: float
    mean_precision: float
    winners: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cluster": self.cluster,
            "population": self.population,
            "n_users_evaluated": self.n_users_evaluated,
            "mean_ndcg": self.mean_ndcg,
            "mean_precision": self.mean_precision,
            "winners": self.winners,
        }


@dataclass
class CombinedScore:
    clusters: list[ClusterScore]
    weights: list[float]
    combined_ndcg: float
    combined_precision: float
    baseline_ndcg: float | None = None
    baseline_precision: float | None = None

    @property
    def delta_abs(self) -> float | None:
        return None if self.baseline_ndcg is None else self.combined_ndcg - self.baseline_ndcg

    @property
    def delta_rel(self) -> float | None:
        if self.baseline_ndcg in (None, 0.0):
            return None
        return self.delta_abs / self.baseline_ndcg

    @property
    def delta_abs_precision(self) -> float | None:
        return None if self.baseline_precision is None else self.combined_precision - self.baseline_precision

    @property
    def delta_rel_precision(self) -> float | None:
        if self.baseline_precision in (None, 0.0):
            return None
        return self.delta_abs_precision / self.baseline_precision

    def to_dict(self) -> dict:
        return {
            "combined_ndcg": self.combined_ndcg,
            "combined_precision": self.combined_precision,
            "baseline_ndcg": self.baseline_ndcg,
            "baseline_precision": self.baseline_precision,
            "delta_abs": self.delta_abs,
            "delta_rel": self.delta_rel,
            "delta_abs_precision": self.delta_abs_precision,
            "delta_rel_precision": self.delta_rel_precision,
            "weights": self.weights,
            "clusters": [c.to_dict() for c in self.clusters],
        }


def combine(cluster_scores: Sequence[ClusterScore], populations: Sequence[float], n_users: int,
            baseline: tuple[float, float] | None = None) -> CombinedScore:
    """User-count weighted sum of per-cluster scores: sum_c (n_c / U) * score_c."""
    populations = [float(p) for p in populations]
    if len(populations) != len(cluster_scores):
        raise ValueError("one population per cluster score is required")
    if any(p <= 0 for p in populations):
        raise ValueError("cluster populations must be positive")
    if abs(sum(populations) - n_users) > 1e-9 * max(n_users, 1):
        raise ValueError(f"populations sum to {sum(populations)}, expected {n_users}")
    weights = [p / n_users for p in populations]
    nd = math.fsum(w * c.mean_ndcg for w, c in zip(weights, cluster_scores))
    pr = math.fsum(w * c.mean_precision for w, c in zip(weights, cluster_scores))
    b_nd, b_pr = baseline if baseline is not None else (None, None)
    return CombinedScore(list(cluster_scores), weights, nd, pr, b_nd, b_pr)


@dataclass(frozen=True)
class Selection:
    """Per-metric argmax over a trial list; ``None`` entries mean fallback."""

    ndcg: Any | None
    precision: Any | None

    @property
    def fallback(self) -> bool:
        return self.ndcg is None


def select_best(trials: Sequence) -> Selection:
    """Argmax of validation nDCG@10 and, independently, Precision@10.

    Only trials with ``status == "ok"`` compete; ties go to the earlier trial.
    """
    ok = [t for t in trials if t.status == "ok"]
    if not ok:
        return Selection(None, None)
    best_n = max(ok, key=lambda t: (t.ndcg, -t.trial))
    best_p = max(ok, key=lambda t: (t.precision, -t.trial))
    return Selection(best_n, best_p)
