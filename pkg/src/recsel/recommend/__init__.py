"""The eight recommendation algorithms behind a common fit / top-k contract."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp

from .als import ConjugateGradientALS, ImplicitMF, als_objective
from .base import FitFailure, HyperParamSpace, Param, Recommender, TopKList, top_k
from .baselines import PopScore, RandomScores
from .bpr import BPR
from .knn import ItemKNN, UserKNN, cosine_similarity
from .logistic import LogisticMF

ALGORITHMS: dict[str, type[Recommender]] = {
    cls.name: cls
    for cls in (RandomScores, PopScore, ItemKNN, UserKNN, ImplicitMF, ConjugateGradientALS, BPR, LogisticMF)
}
FALLBACK = "popscore"

__all__ = [
    "ALGORITHMS", "BPR", "FALLBACK", "ConjugateGradientALS", "FitFailure", "HyperParamSpace", "ImplicitMF",
    "ItemKNN", "LogisticMF", "Param", "PopScore", "RandomScores", "Recommender", "TopKList", "UserKNN",
    "als_objective", "cosine_similarity", "fit", "load_model", "make", "recommend", "save_model",
    "score_all", "spaces", "top_k",
]


def spaces(algorithms=None) -> dict[str, HyperParamSpace]:
    names = list(ALGORITHMS) if algorithms is None else list(algorithms)
    return {a: ALGORITHMS[a].space for a in names}


def make(algorithm: str, hyperparams: dict[str, Any] | None = None) -> Recommender:
    try:
        cls = ALGORITHMS[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {sorted(ALGORITHMS)}") from None
    return cls(**(hyperparams or {}))


def fit(algorithm: str, train: sp.csr_matrix, hyperparams: dict[str, Any] | None = None,
        seed: int = 0) -> Recommender:
    """Train ``algorithm``; numerical breakdown surfaces as :class:`FitFailure`."""
    model = make(algorithm, hyperparams)
    try:
        return model.fit(train, seed)
    except (FloatingPointError, np.linalg.LinAlgError, ZeroDivisionError) as e:
        raise FitFailure(str(e)) from e


def score_all(model: Recommender, user: int) -> np.ndarray:
    return model.score_all(user)


def recommend(model: Recommender, user: int, k: int = 10, exclude=None) -> TopKList:
    return model.recommend(user, k, exclude)


def save_model(model: Recommender, path) -> None:
    """JSON header line, then each state block as little-endian float64, row-major."""
    blocks = {k: np.ascontiguousarray(v, dtype="<f8") for k, v in model.state_blocks().items()}
    header = {
        "algorithm": model.name,
        "hyperparams": model.params,
        "seed": model.seed,
        "blocks": [{"name": k, "shape": list(v.shape)} for k, v in blocks.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for v in blocks.values():
            fh.write(v.tobytes(order="C"))


def load_model(path, train: sp.csr_matrix) -> Recommender:
    """Rebuild a dumped model; ``train`` supplies the exclusion profiles."""
    raw = Path(path).read_bytes()
    head, _, body = raw.partition(b"\n")
    header = json.loads(head)
    model = make(header["algorithm"], header["hyperparams"])
    model.train = sp.csr_matrix(train, dtype=np.float64)
    model.seed = header["seed"]
    model._known = np.bincount(model.train.indices, minlength=model.train.shape[1]) > 0
    blocks, offset = {}, 0
    for b in header["blocks"]:
        n = int(np.prod(b["shape"])) * 8
        blocks[b["name"]] = np.frombuffer(body[offset:offset + n], dtype="<f8").reshape(b["shape"]).copy()
        offset += n
    if blocks:
        model.load_state(blocks)
    else:
        model._fit(model.train, np.random.default_rng(model.seed))
    return model
