"""Cluster users, then pick a recommender per cluster by random search."""

__version__ = "0.1.0"

from .dataset import Dataset, DatasetStats, FoldSplit, crossfold, load_interactions, stats  # noqa: F401
from .clustering import ClusterSet, cluster_users  # noqa: F401
from .recommend import ALGORITHMS, fit  # noqa: F401
from .evaluate import combine, evaluate_model, ndcg_at_k, precision_at_k, select_best  # noqa: F401
from .search import SearchBudget, random_search  # noqa: F401
from .config import DatasetSpec, RunConfig, load_config  # noqa: F401
