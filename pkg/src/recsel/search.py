"""Budgeted random search over algorithms and their hyperparameters."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import recommend
from ._seeding import derive_seed, rng_for
from .dataset import FoldSplit, SplitExhausted, shrink_inner_split
from .evaluate import K, Selection, eligible_users, evaluate_model, select_best
from .recommend import FALLBACK, FitFailure, HyperParamSpace

logger = logging.getLogger(__name__)

STATUSES = ("ok", "fit_failed", "timed_out")


@dataclass(frozen=True)
class SearchBudget:
    max_iterations: int = 100
    wall_clock_limit: float | None = 4 * 3600.0  # seconds; None disables

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.wall_clock_limit is not None and self.wall_clock_limit <= 0:
            raise ValueError("wall_clock_limit must be positive")


@dataclass
class TrialResult:
    trial: int
    algorithm: str
    hyperparams: dict[str, Any]
    status: str
    ndcg: float | None = None
    precision: float | None = None
    n_users: int = 0
    split_ratio: float = 0.8
    seed: int = 0
    fit_seconds: float = 0.0
    predict_seconds: float = 0.0
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TestResult:
    """Winner refit on the outer train split and scored on the outer test split."""

    metric: str
    algorithm: str
    hyperparams: dict[str, Any]
    ndcg: float
    precision: float
    n_users: int
    fallback: bool = False
    trial: int | None = None
    fit_seconds: float = 0.0
    predict_seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ClusterSearchOutcome:
    trials: list[TrialResult]
    selection: Selection
    test: dict[str, TestResult] = field(default_factory=dict)
    cluster: int = 0
    fold: int = 0

    @property
    def fallback_used(self) -> bool:
        return self.selection.fallback

    @property
    def fit_seconds(self) -> float:
        return sum(t.fit_seconds for t in self.trials) + sum(r.fit_seconds for r in self.test.values())

    @property
    def predict_seconds(self) -> float:
        return sum(t.predict_seconds for t in self.trials) + sum(r.predict_seconds for r in self.test.values())


def sample_config(spaces: Mapping[str, HyperParamSpace], rng: np.random.Generator) -> tuple[str, dict]:
    """Uniform algorithm choice, then independent draws for each of its parameters."""
    names = list(spaces)
    if not names:
        raise ValueError("no algorithms to sample from")
    alg = names[int(rng.integers(len(names)))]
    return alg, spaces[alg].sample(rng)


def run_trial(fold: FoldSplit, algorithm: str, params: dict, seed: int, k: int = K, trial: int = 0) -> TrialResult:
    """Fit on the inner train split and score on inner validation.

    A failed fit (or a split that leaves no validation users) shrinks the
    inner train share by 10 points and retries, down to 50/50.
    """
    split = fold
    last_error = None
    while True:
        t0 = time.perf_counter()
        fit_s = 0.0
        try:
            if len(eligible_users(split.inner_train, split.inner_valid)) == 0:
                raise FitFailure("inner split leaves no validation users")
            model = recommend.fit(algorithm, split.inner_train, params, seed)
            fit_s = time.perf_counter() - t0
            t1 = time.perf_counter()
            ev = evaluate_model(model, split.inner_train, split.inner_valid, k)
            pred_s = time.perf_counter() - t1
            if not (np.isfinite(ev.mean_ndcg) and np.isfinite(ev.mean_precision)):
                raise FitFailure("non-finite validation metrics")
            return TrialResult(trial, algorithm, dict(params), "ok", ev.mean_ndcg, ev.mean_precision, ev.n_users,
                               split.split_ratio, seed, fit_s, pred_s)
        except FitFailure as e:
            last_error = str(e)
            fit_s = fit_s or time.perf_counter() - t0
            try:
                split = shrink_inner_split(split)
            except SplitExhausted:
                return TrialResult(trial, algorithm, dict(params), "fit_failed", split_ratio=split.split_ratio,
                                   seed=seed, fit_seconds=fit_s, error=last_error)


def _test_winner(fold: FoldSplit, metric: str, winner: TrialResult | None, seed: int, k: int) -> TestResult:
    if winner is not None:
        alg, params, fallback, trial = winner.algorithm, winner.hyperparams, False, winner.trial
    else:
        alg, params, fallback, trial = FALLBACK, {}, True, None
    refit_seed = derive_seed(seed, "refit", trial)
    t0 = time.perf_counter()
    try:
        model = recommend.fit(alg, fold.train, params, refit_seed)
    except FitFailure:
        logger.warning("refit of %s failed on outer train; using %s", alg, FALLBACK)
        alg, params, fallback = FALLBACK, {}, True
        model = recommend.fit(alg, fold.train, params, refit_seed)
    fit_s = time.perf_counter() - t0
    t1 = time.perf_counter()
    ev = evaluate_model(model, fold.train, fold.test, k)
    return TestResult(metric, alg, dict(params), ev.mean_ndcg, ev.mean_precision, ev.n_users, fallback, trial,
                      fit_s, time.perf_counter() - t1)


def random_search(fold: FoldSplit, algorithms: Sequence[str], budget: SearchBudget = SearchBudget(),
                  seed: int = 0, k: int = K, on_trial: Callable[[TrialResult], None] | None = None,
                  clock: Callable[[], float] = time.monotonic, evaluate_test: bool = True) -> ClusterSearchOutcome:
    """Up to ``budget.max_iterations`` trials, stopping once the wall clock limit is passed.

    Trial ``t`` draws its config and seed from ``(seed, t)`` alone, so the
    sequence does not depend on execution order. Winners are refit on the
    outer train split and scored on the outer test split; without a single
    ok trial the fallback (PopScore defaults) takes their place.
    """
    spaces = recommend.spaces(algorithms)
    start = clock()
    trials: list[TrialResult] = []
    for t in range(budget.max_iterations):
        alg, params = sample_config(spaces, rng_for(seed, "sample", t))
        res = run_trial(fold, alg, params, derive_seed(seed, "trial", t), k, trial=t)
        trials.append(res)
        if on_trial is not None:
            on_trial(res)
        if budget.wall_clock_limit is not None and clock() - start > budget.wall_clock_limit:
            logger.info("search stopped after %d trials: wall clock limit reached", len(trials))
            break
    sel = select_best(trials)
    outcome = ClusterSearchOutcome(trials, sel, fold=fold.fold_id)
    if evaluate_test:
        nd = _test_winner(fold, "ndcg", sel.ndcg, seed, k)
        if sel.precision is sel.ndcg:
            pr = TestResult(**{**nd.to_dict(), "metric": "precision"})
        else:
            pr = _test_winner(fold, "precision", sel.precision, seed, k)
        outcome.test = {"ndcg": nd, "precision": pr}
    return outcome


class TrialLog:
    """JSON-lines sink, one record per line, flushed as written."""

    def __init__(self, path, mode: str = "a"):
        self.path = path
        self._fh = open(path, mode, encoding="utf-8")

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=False) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
