from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, ClassVar, Sequence

import numpy as np
import scipy.sparse as sp


class FitFailure(RuntimeError):
    """A model could not be trained (numerical breakdown or unusable data)."""


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # "int" | "real" | "log" | "cat"
    low: float | None = None
    high: float | None = None
    choices: tuple = ()

    def sample(self, rng: np.random.Generator):
        if self.kind == "int":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        if self.kind == "real":
            return float(rng.uniform(self.low, self.high))
        if self.kind == "log":
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        if self.kind == "cat":
            return self.choices[int(rng.integers(len(self.choices)))]
        raise ValueError(f"unknown parameter kind {self.kind!r}")

    def contains(self, value) -> bool:
        if self.kind == "cat":
            return value in self.choices
        if self.kind == "int" and int(value) != value:
            return False
        return self.low <= value <= self.high


@dataclass(frozen=True)
class HyperParamSpace:
    params: tuple[Param, ...] = ()

    def sample(self, rng: np.random.Generator) -> dict[str, Any]:
        return {p.name: p.sample(rng) for p in self.params}

    def validate(self, values: dict[str, Any]) -> None:
        names = {p.name for p in self.params}
        extra = set(values) - names
        if extra:
            raise ValueError(f"unknown hyperparameters {sorted(extra)}")
        for p in self.params:
            if p.name in values and not p.contains(values[p.name]):
                raise ValueError(f"{p.name}={values[p.name]!r} outside {p}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)


@dataclass(frozen=True, eq=False)
class TopKList:
    user: int
    items: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.items)


def top_k(scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the k largest finite scores, ties broken by ascending index."""
    cand = np.flatnonzero(np.isfinite(scores))
    if len(cand) > 4 * k:
        kth = np.partition(scores[cand], len(cand) - k)[len(cand) - k]
        cand = cand[scores[cand] >= kth]
    order = np.lexsort((cand, -scores[cand]))[:k]
    items = cand[order]
    return items, scores[items]


class Recommender:
    """Fit/score contract shared by all algorithms.

    Scores of items in the user's training profile, and of items that never
    occur in the training matrix, are ``-inf``; recommendations are the
    top-k of the remaining items.
    """

    name: ClassVar[str] = ""
    space: ClassVar[HyperParamSpace] = HyperParamSpace()
    defaults: ClassVar[dict[str, Any]] = {}

    def __init__(self, **params):
        merged = {**self.defaults, **params}
        self.space.validate(params)
        self.params = merged
        self.seed = 0
        self.train: sp.csr_matrix | None = None

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in sorted(self.params.items()))
        return f"{type(self).__name__}({args})"

    # subclasses implement these two
    def _fit(self, train: sp.csr_matrix, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def _raw_scores(self, users: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def fit(self, train: sp.csr_matrix, seed: int = 0) -> "Recommender":
        train = sp.csr_matrix(train, dtype=np.float64)
        if train.nnz == 0:
            raise FitFailure("empty training matrix")
        self.train = train
        self.seed = int(seed)
        self._known = np.bincount(train.indices, minlength=train.shape[1]) > 0
        self._fit(train, np.random.default_rng(seed))
        return self

    @property
    def n_users(self) -> int:
        return self.train.shape[0]

    @property
    def n_items(self) -> int:
        return self.train.shape[1]

    def _check_users(self, users) -> np.ndarray:
        if self.train is None:
            raise RuntimeError("model is not fitted")
        users = np.atleast_1d(np.asarray(users, dtype=np.int64))
        if users.size and (users.min() < 0 or users.max() >= self.n_users):
            raise KeyError(f"unknown user index in {users}")
        return users

    def score_batch(self, users: Sequence[int]) -> np.ndarray:
        users = self._check_users(users)
        S = np.array(self._raw_scores(users), dtype=np.float64, copy=True).reshape(len(users), self.n_items)
        S[:, ~self._known] = -np.inf
        T = self.train[users]
        rows = np.repeat(np.arange(len(users)), np.diff(T.indptr))
        S[rows, T.indices] = -np.inf
        return S

    def score_all(self, user: int) -> np.ndarray:
        return self.score_batch([user])[0]

    def recommend(self, user: int, k: int = 10, exclude=None) -> TopKList:
        s = self.score_all(user)
        if exclude is not None:
            s[np.asarray(list(exclude), dtype=np.int64)] = -np.inf
        items, scores = top_k(s, k)
        return TopKList(int(user), items, scores)

    def recommend_batch(self, users: Sequence[int], k: int = 10, chunk: int = 256) -> list[TopKList]:
        users = np.asarray(users, dtype=np.int64)
        out = []
        for lo in range(0, len(users), chunk):
            block = users[lo:lo + chunk]
            S = self.score_batch(block)
            for u, s in zip(block, S):
                items, scores = top_k(s, k)
                out.append(TopKList(int(u), items, scores))
        return out

    # model dumps
    def state_blocks(self) -> dict[str, np.ndarray]:
        return {}

    def load_state(self, blocks: dict[str, np.ndarray]) -> None:
        for k, v in blocks.items():
            setattr(self, k, v)


def init_factors(rng: np.random.Generator, n: int, factors: int) -> np.ndarray:
    return rng.standard_normal((n, factors)) / math.sqrt(factors)


def check_finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FitFailure("non-finite model parameters")
