"""Study orchestration: baseline, clustering configs, per-cluster searches, reports."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import dataset as ds
from ._seeding import derive_seed
from .clustering import ClusterSet, ClusteringTimeout, cluster_users
from .config import DatasetSpec, RunConfig
from .evaluate import ClusterScore, CombinedScore, combine
from .search import ClusterSearchOutcome, SearchBudget, TrialLog, random_search

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BASELINE = "baseline"
STAGES = ("cluster", "fit", "predict")


def params_key(params: dict) -> str:
    return json.dumps(params, sort_keys=True)


# -- runtime accounting -------------------------------------------------------

@dataclass(frozen=True)
class RuntimeRecord:
    dataset: str
    approach: str
    params: str
    cluster: int  # -1 for the clustering stage, which runs once per config
    stage: str
    seconds: float


@dataclass
class RuntimeLedger:
    records: list[RuntimeRecord] = field(default_factory=list)

    def add(self, dataset, approach, params, cluster, stage, seconds):
        self.records.append(RuntimeRecord(dataset, approach, params_key(params) if isinstance(params, dict)
                                          else params, cluster, stage, float(seconds)))

    def parallel_runtime(self, dataset: str, approach: str, params: str | dict, stage: str) -> float:
        """Max over clusters of one stage's duration (clusters assumed concurrent)."""
        key = params_key(params) if isinstance(params, dict) else params
        vals = [r.seconds for r in self.records
                if (r.dataset, r.approach, r.params, r.stage) == (dataset, approach, key, stage)]
        return max(vals, default=0.0)

    def summary(self) -> list[tuple[str, str, float]]:
        """Mean parallel runtime per (approach, stage) over datasets and configs."""
        per: dict[tuple[str, str], list[float]] = defaultdict(list)
        configs = sorted({(r.dataset, r.approach, r.params) for r in self.records})
        for d, a, p in configs:
            for stage in STAGES:
                per[(a, stage)].append(self.parallel_runtime(d, a, p, stage))
        return [(a, s, float(np.mean(v))) for (a, s), v in sorted(per.items())]

    def to_dict(self) -> dict:
        return {"records": [vars(r) for r in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "RuntimeLedger":
        return cls([RuntimeRecord(**r) for r in d.get("records", [])])


# -- results --------------------------------------------------------------------

@dataclass
class ConfigResult:
    approach: str
    params: dict
    status: str  # ok | failed | timeout
    n_clusters: int = 0
    populations: list[int] = field(default_factory=list)
    combined: CombinedScore | None = None
    combined_ndcg_evaluated: float | None = None
    combined_precision_evaluated: float | None = None
    error: str | None = None

    def metric(self, name: str = "ndcg") -> float | None:
        if self.combined is None:
            return None
        return self.combined.combined_ndcg if name == "ndcg" else self.combined.combined_precision

    def to_dict(self) -> dict:
        return {
            "approach": self.approach,
            "params": self.params,
            "status": self.status,
            "error": self.error,
            "n_clusters": self.n_clusters,
            "populations": self.populations,
            "combined": None if self.combined is None else self.combined.to_dict(),
            "combined_ndcg_evaluated": self.combined_ndcg_evaluated,
            "combined_precision_evaluated": self.combined_precision_evaluated,
        }


@dataclass
class DatasetResult:
    name: str
    stats: ds.DatasetStats
    baseline: ClusterScore
    configs: list[ConfigResult] = field(default_factory=list)


@dataclass
class StudyReport:
    config: RunConfig
    datasets: list[DatasetResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        metric = self.config.metric
        out = {
            "schema_version": SCHEMA_VERSION,
            "seed": self.config.seed,
            "metric": metric,
            "config": self.config.to_dict(),
            "datasets": [],
            "algorithm_frequency": algorithm_frequency(self),
        }
        for d in self.datasets:
            best = max_best(d, metric)
            out["datasets"].append({
                "name": d.name,
                "stats": {k: v for k, v in vars(d.stats).items()},
                "baseline": d.baseline.to_dict(),
                "configs": [c.to_dict() for c in d.configs],
                "max_best": None if best is None else {
                    "approach": best.approach,
                    "params": best.params,
                    "combined_ndcg": best.combined.combined_ndcg,
                    "combined_precision": best.combined.combined_precision,
                    "delta_abs": best.combined.delta_abs,
                    "delta_rel": best.combined.delta_rel,
                },
            })
        return out


# -- search fan-out ---------------------------------------------------------------

def _search_task(fold, algorithms, budget, seed, k):
    return random_search(fold, algorithms, budget, seed=seed, k=k)


def _strip_timing(d: dict) -> dict:
    return {k: v for k, v in d.items() if k not in ("fit_seconds", "predict_seconds")}


class _Runner:
    """Holds the per-study worker pool, trial log and runtime ledger."""

    def __init__(self, cfg: RunConfig, log: TrialLog | None = None, ledger: RuntimeLedger | None = None):
        self.cfg = cfg
        self.log = log
        self.ledger = ledger if ledger is not None else RuntimeLedger()
        self.pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def _write(self, record: dict):
        if self.log is not None:
            self.log.write(record)

    def search_clusters(self, name: str, matrix, assignment: np.ndarray, approach: str, params: dict,
                        budget: SearchBudget) -> tuple[list[ClusterScore], float, float]:
        """Random search on every (cluster, fold); returns fold-averaged cluster scores.

        Also returns the evaluated-user weighted combination (nDCG, precision),
        which equals the flat per-user mean within each fold.
        """
        cfg = self.cfg
        C = int(assignment.max()) + 1
        pops = np.bincount(assignment, minlength=C)
        U = len(assignment)
        base_key = (cfg.seed, name, approach, params_key(params))
        tasks = []
        for c in range(C):
            sub = matrix[np.flatnonzero(assignment == c)]
            for fold in ds.crossfold(sub, cfg.folds, seed=derive_seed(*base_key, c, "folds")):
                tasks.append((c, fold, derive_seed(*base_key, c, fold.fold_id)))

        def ctx(c, f):
            return {"dataset": name, "approach": approach, "params": params, "cluster": c, "fold": f}

        outcomes: dict[tuple[int, int], ClusterSearchOutcome] = {}
        if self.pool is None:
            for c, fold, seed in tasks:
                def sink(res, c=c, f=fold.fold_id):
                    self._write({"kind": "trial", **ctx(c, f), **res.to_dict()})
                outcomes[(c, fold.fold_id)] = random_search(fold, cfg.algorithms, budget, seed=seed, k=cfg.k,
                                                            on_trial=sink)
        else:
            futs = {self.pool.submit(_search_task, fold, cfg.algorithms, budget, seed, cfg.k): (c, fold.fold_id)
                    for c, fold, seed in tasks}
            for fut in as_completed(futs):
                c, f = futs[fut]
                outcomes[(c, f)] = out = fut.result()
                for res in out.trials:
                    self._write({"kind": "trial", **ctx(c, f), **res.to_dict()})

        scores = []
        per_fold_eval = defaultdict(lambda: [0.0, 0.0, 0])
        for c in range(C):
            winners, nd, pr, nu = [], [], [], []
            fit_s = pred_s = 0.0
            for f in range(cfg.folds):
                out = outcomes[(c, f)]
                tn, tp = out.test["ndcg"], out.test["precision"]
                for t in (tn, tp):
                    self._write({"kind": "test", **ctx(c, f), **t.to_dict(), "population": int(pops[c]),
                                 "n_total_users": U})
                nd.append(tn.ndcg)
                pr.append(tp.precision)
                nu.append(tn.n_users)
                fit_s += out.fit_seconds
                pred_s += out.predict_seconds
                acc = per_fold_eval[f]
                acc[0] += tn.ndcg * tn.n_users
                acc[1] += tp.precision * tp.n_users
                acc[2] += tn.n_users
                winners.append({
                    "fold": f,
                    "fallback": out.fallback_used,
                    "n_trials": len(out.trials),
                    "n_ok": sum(t.status == "ok" for t in out.trials),
                    "ndcg": _strip_timing(tn.to_dict()),
                    "precision": _strip_timing(tp.to_dict()),
                })
            self.ledger.add(name, approach, params, c, "fit", fit_s)
            self.ledger.add(name, approach, params, c, "predict", pred_s)
            scores.append(ClusterScore(c, int(pops[c]), float(np.mean(nu)), math.fsum(nd) / len(nd),
                                       math.fsum(pr) / len(pr), winners))
        ev_nd = [a[0] / a[2] for a in per_fold_eval.values() if a[2]]
        ev_pr = [a[1] / a[2] for a in per_fold_eval.values() if a[2]]
        return scores, float(np.mean(ev_nd)) if ev_nd else 0.0, float(np.mean(ev_pr)) if ev_pr else 0.0


def run_baseline(dataset: ds.Dataset, cfg: RunConfig, name: str = "dataset", runner: _Runner | None = None) -> ClusterScore:
    """Whole user set as one cluster, same CV and search budget as the clusters."""
    own = runner is None
    runner = runner or _Runner(cfg)
    try:
        assignment = np.zeros(dataset.n_users, dtype=np.int64)
        runner.ledger.add(name, BASELINE, {}, -1, "cluster", 0.0)
        scores, _, _ = runner.search_clusters(name, dataset.matrix, assignment, BASELINE, {}, cfg.budget())
        runner._write({"kind": "config", "dataset": name, "approach": BASELINE, "params": {}, "status": "ok",
                       "n_clusters": 1, "populations": [dataset.n_users], "n_total_users": dataset.n_users})
        return scores[0]
    finally:
        if own:
            runner.close()


def run_config(dataset: ds.Dataset, approach: str, params: dict, cfg: RunConfig, baseline: ClusterScore | None,
               name: str = "dataset", runner: _Runner | None = None,
               cluster_set: ClusterSet | None = None) -> ConfigResult:
    own = runner is None
    runner = runner or _Runner(cfg)
    try:
        t0 = time.perf_counter()
        try:
            if cluster_set is None:
                cluster_set = cluster_users(dataset, approach, params, seed=cfg.seed,
                                            timeout=cfg.scaled_cluster_timeout)
        except ClusteringTimeout as e:
            runner.ledger.add(name, approach, params, -1, "cluster", time.perf_counter() - t0)
            logger.warning("%s %s %s: %s", name, approach, params, e)
            runner._write({"kind": "config", "dataset": name, "approach": approach, "params": params,
                           "status": "timeout"})
            return ConfigResult(approach, params, "timeout", error=str(e))
        except ValueError as e:
            logger.warning("%s %s %s failed: %s", name, approach, params, e)
            runner._write({"kind": "config", "dataset": name, "approach": approach, "params": params,
                           "status": "failed"})
            return ConfigResult(approach, params, "failed", error=str(e))
        runner.ledger.add(name, approach, params, -1, "cluster", time.perf_counter() - t0)
        pops = [int(p) for p in cluster_set.populations]
        runner._write({"kind": "config", "dataset": name, "approach": approach, "params": params, "status": "ok",
                       "n_clusters": cluster_set.n_clusters, "populations": pops,
                       "n_total_users": dataset.n_users})
        scores, ev_nd, ev_pr = runner.search_clusters(name, dataset.matrix, cluster_set.assignment, approach,
                                                      params, cfg.budget())
        base = None if baseline is None else (baseline.mean_ndcg, baseline.mean_precision)
        comb = combine(scores, pops, dataset.n_users, base)
        return ConfigResult(approach, params, "ok", cluster_set.n_clusters, pops, comb, ev_nd, ev_pr)
    finally:
        if own:
            runner.close()


def run_approach(dataset: ds.Dataset, approach: str, grid: Sequence[dict], cfg: RunConfig,
                 baseline: ClusterScore | None, name: str = "dataset",
                 runner: _Runner | None = None) -> list[ConfigResult]:
    own = runner is None
    runner = runner or _Runner(cfg)
    try:
        out = []
        for params in grid:
            logger.info("%s: %s %s", name, approach, params)
            out.append(run_config(dataset, approach, params, cfg, baseline, name, runner))
        return out
    finally:
        if own:
            runner.close()


def load_dataset(spec: DatasetSpec) -> ds.Dataset:
    p = Path(spec.path)
    if p.is_dir():
        return ds.read_dump(p)
    return ds.load_interactions(p, ds.CsvSchema.parse(spec.schema), min_rating=spec.min_rating,
                                prune=spec.prune, source=spec.name)


def run_study(cfg: RunConfig, out_dir=None, datasets: dict[str, ds.Dataset] | None = None,
              emit: bool = True) -> tuple[StudyReport, RuntimeLedger]:
    """Full study over every configured dataset; writes reports into ``out_dir``."""
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    report = StudyReport(cfg)
    ledger = RuntimeLedger()
    with TrialLog(out / "trials.jsonl", mode="w") as log:
        runner = _Runner(cfg, log, ledger)
        try:
            items = list(datasets.items()) if datasets is not None else [
                (s.name, load_dataset(s)) for s in cfg.datasets]
            domains = {s.name: s.domain for s in cfg.datasets}
            for name, data in items:
                logger.info("%s: %d users, %d items, %d interactions", name, data.n_users, data.n_items,
                            data.n_interactions)
                base = run_baseline(data, cfg, name, runner)
                res = DatasetResult(name, ds.stats(data, domains.get(name, "")), base)
                for approach in cfg.approaches:
                    res.configs.extend(run_approach(data, approach, cfg.grid(approach), cfg, base, name, runner))
                report.datasets.append(res)
        finally:
            runner.close()
    if emit:
        from .reports import emit_reports
        emit_reports(report, out, ledger)
    return report, ledger


# -- study-level summaries --------------------------------------------------------

def max_best(result: DatasetResult, metric: str = "ndcg") -> ConfigResult | None:
    """Configuration with the highest combined score; ties keep the earlier config."""
    ok = [c for c in result.configs if c.status == "ok"]
    if not ok:
        return None
    return max(enumerate(ok), key=lambda ic: (ic[1].metric(metric), -ic[0]))[1]


def algorithm_frequency(study: StudyReport) -> dict[str, dict[str, Any]]:
    """Share of (dataset, config, cluster, fold) cells won by each algorithm, per approach."""
    counts: dict[str, Counter] = defaultdict(Counter)
    for d in study.datasets:
        for c in d.configs:
            if c.combined is None:
                continue
            for cs in c.combined.clusters:
                for w in cs.winners:
                    counts[c.approach][w["ndcg"]["algorithm"]] += 1
    out = {}
    for approach in sorted(counts):
        total = sum(counts[approach].values())
        out[approach] = {
            "total": total,
            "counts": dict(sorted(counts[approach].items())),
            "percent": {a: 100.0 * n / total for a, n in sorted(counts[approach].items())},
        }
    return out
