"""Study configuration and its INI-style ``.conf`` file format.

Example::

    [study]
    seed = 42
    iterations = 10
    time_limit = none          ; seconds, or none
    folds = 5
    algorithms = popscore, itemknn, userknn, implicitmf_als
    approaches = kmeans_count, louvain

    [grid.kmeans_count]
    k = 2, 3

    [grid.louvain]
    resolution = 1.0

    [dataset.ml100k]
    path = ../data/ml-100k/u.inter   ; relative to this file
    schema = recbole
    min_rating = 3
    domain = Movies
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .clustering import APPROACHES, CLUSTER_COUNTS, RESOLUTIONS, enumerate_configs
from .recommend import ALGORITHMS
from .search import SearchBudget

DEFAULT_TIME_LIMIT = 4 * 3600.0
DEFAULT_CLUSTER_TIMEOUT = 6 * 3600.0


@dataclass
class DatasetSpec:
    name: str
    path: str
    schema: str = "default"
    min_rating: float | None = None
    prune: bool = True
    domain: str = ""


@dataclass
class RunConfig:
    datasets: list[DatasetSpec] = field(default_factory=list)
    approaches: tuple[str, ...] = APPROACHES
    cluster_counts: tuple[int, ...] = CLUSTER_COUNTS
    resolutions: tuple[float, ...] = RESOLUTIONS
    grids: dict[str, dict[str, tuple]] = field(default_factory=dict)
    algorithms: tuple[str, ...] = tuple(ALGORITHMS)
    iterations: int = 100
    time_limit: float | None = DEFAULT_TIME_LIMIT
    folds: int = 5
    k: int = 10
    seed: int = 42
    workers: int = 1
    cluster_timeout: float | None = DEFAULT_CLUSTER_TIMEOUT
    budget_scale: float = 1.0
    metric: str = "ndcg"
    out: str = "results"

    def __post_init__(self):
        for a in self.approaches:
            if a not in APPROACHES:
                raise ValueError(f"unknown approach {a!r}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        if self.metric not in ("ndcg", "precision"):
            raise ValueError("metric must be 'ndcg' or 'precision'")
        if self.folds < 2:
            raise ValueError("need at least two folds")

    def budget(self) -> SearchBudget:
        limit = None if self.time_limit is None else self.time_limit * self.budget_scale
        return SearchBudget(self.iterations, limit)

    @property
    def scaled_cluster_timeout(self) -> float | None:
        return None if self.cluster_timeout is None else self.cluster_timeout * self.budget_scale

    def grid(self, approach: str) -> list[dict]:
        g = self.grids.get(approach, {})
        counts = tuple(g.get("k", self.cluster_counts))
        res = tuple(g.get("resolution", self.resolutions))
        return [p for _, p in enumerate_configs(approach, counts, res)]

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["datasets"] = [vars(s) for s in self.datasets]
        d["grids"] = {a: {k: list(v) for k, v in g.items()} for a, g in sorted(self.grids.items())}
        for key in ("approaches", "cluster_counts", "resolutions", "algorithms"):
            d[key] = list(d[key])
        d.pop("out")
        return d


def _list(value: str, conv=str) -> tuple:
    return tuple(conv(v.strip()) for v in value.split(",") if v.strip())


def _opt_float(value: str) -> float | None:
    return None if value.strip().lower() in ("none", "off", "") else float(value)


def load_config(path) -> RunConfig:
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not cp.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    kw: dict = {}
    if cp.has_section("study"):
        s = cp["study"]
        conv = {
            "seed": int, "iterations": int, "folds": int, "k": int, "workers": int,
            "time_limit": _opt_float, "cluster_timeout": _opt_float, "budget_scale": float,
            "metric": str, "out": str,
            "approaches": _list, "algorithms": _list,
            "cluster_counts": lambda v: _list(v, int), "resolutions": lambda v: _list(v, float),
        }
        for key, value in s.items():
            if key not in conv:
                raise ValueError(f"{path}: unknown [study] key {key!r}")
            kw[key] = conv[key](value)
    grids, datasets = {}, []
    for section in cp.sections():
        if section.startswith("grid."):
            g = cp[section]
            grids[section[5:]] = {
                **({"k": _list(g["k"], int)} if "k" in g else {}),
                **({"resolution": _list(g["resolution"], float)} if "resolution" in g else {}),
            }
        elif section.startswith("dataset."):
            d = cp[section]
            p = Path(d["path"])
            if not p.is_absolute():
                p = (path.parent / p).resolve()
            datasets.append(DatasetSpec(
                name=section[8:], path=str(p), schema=d.get("schema", "default"),
                min_rating=_opt_float(d.get("min_rating", "none")),
                prune=d.getboolean("prune", True), domain=d.get("domain", ""),
            ))
    return RunConfig(datasets=datasets, grids=grids, **kw)
