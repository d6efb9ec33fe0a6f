import itertools
import json

import numpy as np
import pytest

from recsel import recommend as rec
from recsel.dataset import crossfold
from recsel.recommend import FitFailure, HyperParamSpace, Param, Recommender
from recsel.search import STATUSES, SearchBudget, TrialLog, random_search, run_trial, sample_config

from conftest import random_binary


@pytest.fixture
def fold():
    return crossfold(random_binary(30, 25, 0.35, seed=2, min_per_user=6), 5, seed=0)[0]


class Flaky(Recommender):
    """Fails its first ``fails`` fits, then behaves like item popularity."""

    name = "flaky"
    space = HyperParamSpace((Param("x", "real", 0.0, 1.0),))
    fails = 0
    calls = 0

    def _fit(self, train, rng):
        type(self).calls += 1
        if type(self).calls <= type(self).fails:
            raise FitFailure("synthetic failure")
        self.pop = np.bincount(train.indices, minlength=train.shape[1]).astype(float)

    def _raw_scores(self, users):
        return np.tile(self.pop, (len(users), 1))


@pytest.fixture
def flaky(monkeypatch):
    monkeypatch.setitem(rec.ALGORITHMS, "flaky", Flaky)
    Flaky.calls = 0
    return Flaky


def test_budget_validation():
    with pytest.raises(ValueError):
        SearchBudget(0)
    with pytest.raises(ValueError):
        SearchBudget(5, 0.0)


def test_sample_config_in_space():
    rng = np.random.default_rng(0)
    spaces = rec.spaces()
    seen = set()
    for _ in range(200):
        alg, params = sample_config(spaces, rng)
        spaces[alg].validate(params)
        seen.add(alg)
    assert seen == set(rec.ALGORITHMS)
    with pytest.raises(ValueError):
        sample_config({}, rng)


def test_random_search_deterministic_and_bounded(fold):
    algs = ["popscore", "itemknn", "userknn"]
    a = random_search(fold, algs, SearchBudget(6, None), seed=4)
    b = random_search(fold, algs, SearchBudget(6, None), seed=4)
    assert len(a.trials) == 6
    key = lambda o: [(t.algorithm, t.hyperparams, t.ndcg, t.precision) for t in o.trials]
    assert key(a) == key(b)
    assert all(t.status in STATUSES for t in a.trials)
    assert a.test["ndcg"].algorithm == a.selection.ndcg.algorithm
    assert not a.fallback_used


def test_trial_sequence_is_prefix_stable(fold):
    short = random_search(fold, ["popscore", "itemknn"], SearchBudget(3, None), seed=8, evaluate_test=False)
    long = random_search(fold, ["popscore", "itemknn"], SearchBudget(7, None), seed=8, evaluate_test=False)
    assert [t.hyperparams for t in short.trials] == [t.hyperparams for t in long.trials[:3]]


def test_wall_clock_cutoff_after_trial_37(fold):
    ticks = itertools.count()
    out = random_search(fold, ["popscore"], SearchBudget(100, 36.5), seed=0, clock=lambda: float(next(ticks)),
                        evaluate_test=False)
    assert len(out.trials) == 37


def test_shrink_ladder_recovers(fold, flaky):
    flaky.fails = 2
    res = run_trial(fold, "flaky", {"x": 0.5}, seed=0)
    assert res.status == "ok" and res.split_ratio == 0.6


def test_shrink_ladder_exhausted(fold, flaky):
    flaky.fails = 10
    res = run_trial(fold, "flaky", {"x": 0.5}, seed=0)
    assert res.status == "fit_failed" and res.split_ratio == 0.5 and "synthetic" in res.error
    assert flaky.calls == 4


def test_fallback_when_every_trial_fails(fold, flaky):
    flaky.fails = 10 ** 6
    out = random_search(fold, ["flaky"], SearchBudget(5, None), seed=1)
    assert out.fallback_used
    assert all(t.status == "fit_failed" for t in out.trials)
    for metric in ("ndcg", "precision"):
        t = out.test[metric]
        assert t.algorithm == "popscore" and t.fallback and t.hyperparams == {} and t.trial is None
        assert 0.0 <= t.ndcg <= 1.0


def test_trial_log_lines(tmp_path, fold):
    path = tmp_path / "t.jsonl"
    with TrialLog(path, "w") as log:
        random_search(fold, ["popscore"], SearchBudget(3, None), seed=0, on_trial=lambda r: log.write(r.to_dict()),
                      evaluate_test=False)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["trial"] for r in rows] == [0, 1, 2]
    assert set(rows[0]) >= {"algorithm", "hyperparams", "status", "ndcg", "precision", "split_ratio",
                            "fit_seconds", "predict_seconds"}
