"""``recsel`` command line: one subcommand per pipeline stage plus the full study."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset as ds
from .clustering import APPROACHES, ClusterSet, cluster_users
from .config import DatasetSpec, RunConfig, load_config
from .pipeline import BASELINE, _Runner, run_baseline, run_config, run_study
from .recommend import ALGORITHMS
from .reports import emit_reports
from .search import TrialLog

logger = logging.getLogger("recsel")

COMMANDS = ("stats", "prune", "cluster", "search", "run", "report")
PRUNED_DIR = "dataset"  # where `prune` writes unless told otherwise


def _time(value: str) -> float | None:
    if value.lower() in ("none", "off"):
        return None
    return float(value)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recsel", description="Cluster-based algorithm selection for recommenders.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def data_flags(sp, required=True, default=None):
        sp.add_argument("--input", required=required and default is None, default=default,
                        help="interaction CSV, or a directory written by `prune`"
                             + (f" (default: {default})" if default else ""))
        sp.add_argument("--schema", default=None,
                        help="column mapping, e.g. 'user=0,item=1,delimiter=tab,header=false', or a preset "
                             f"({', '.join(ds.SCHEMA_PRESETS)})")
        sp.add_argument("--min-rating", type=float, default=None, help="drop explicit ratings below this value")
        sp.add_argument("--no-prune", action="store_true", help="skip five-core pruning")

    def search_flags(sp):
        sp.add_argument("--iterations", type=int, default=None)
        sp.add_argument("--time-limit", type=_time, default=argparse.SUPPRESS, help="search wall clock seconds, or 'none'")
        sp.add_argument("--folds", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--budget-scale", type=float, default=None)
        sp.add_argument("--algorithms", nargs="+", choices=sorted(ALGORITHMS), default=None)
        sp.add_argument("--metric", choices=("ndcg", "precision"), default=None)

    s = sub.add_parser("stats", help="print dataset statistics (Table-1 format)")
    data_flags(s)
    s.add_argument("--domain", default="")
    s.add_argument("--json", action="store_true", help="print the JSON stats record instead")

    s = sub.add_parser("prune", help="convert, five-core prune and dump a dataset")
    data_flags(s)
    s.add_argument("--out", default=None)

    s = sub.add_parser("cluster", help="run one clustering configuration")
    data_flags(s, default=PRUNED_DIR)
    s.add_argument("--approach", required=True, choices=APPROACHES)
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--resolution", type=float, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--cluster-timeout", type=_time, default=argparse.SUPPRESS)
    s.add_argument("--out", default=None)

    s = sub.add_parser("search", help="per-cluster random search for one cluster set (or the whole dataset)")
    data_flags(s, default=PRUNED_DIR)
    s.add_argument("--clusters", default=None, help="cluster JSON from `cluster`; omit for the no-clustering baseline")
    search_flags(s)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=None)

    s = sub.add_parser("run", help="full study")
    s.add_argument("--config", default=None, help="study .conf file")
    data_flags(s, required=False)
    s.add_argument("--approach", nargs="+", choices=APPROACHES, default=None)
    s.add_argument("--k", type=int, nargs="+", default=None)
    s.add_argument("--resolution", type=float, nargs="+", default=None)
    search_flags(s)
    s.add_argument("--cluster-timeout", type=_time, default=argparse.SUPPRESS)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=None)

    s = sub.add_parser("report", help="regenerate report files from a study directory")
    s.add_argument("--input", required=True, help="directory holding study.json")
    s.add_argument("--out", default=None)
    return p


def _out(args, default: str) -> Path:
    return Path(os.environ.get("RECSEL_OUT") or args.out or default)


def _load(args) -> ds.Dataset:
    p = Path(args.input)
    if p.is_dir():
        return ds.read_dump(p)
    schema = ds.CsvSchema.parse(args.schema) if args.schema else ds.CsvSchema()
    return ds.load_interactions(p, schema, min_rating=args.min_rating, prune=not args.no_prune)


def _cfg_from_args(args, cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg or RunConfig()
    over = {}
    for flag, key in [("iterations", "iterations"), ("folds", "folds"), ("workers", "workers"),
                      ("budget_scale", "budget_scale"), ("metric", "metric"), ("seed", "seed")]:
        v = getattr(args, flag, None)
        if v is not None:
            over[key] = v
    # both accept "none", so presence rather than value decides whether to override
    if hasattr(args, "time_limit"):
        over["time_limit"] = args.time_limit
    if hasattr(args, "cluster_timeout"):
        over["cluster_timeout"] = args.cluster_timeout
    if getattr(args, "algorithms", None):
        over["algorithms"] = tuple(args.algorithms)
    if getattr(args, "approach", None) and isinstance(args.approach, list):
        over["approaches"] = tuple(args.approach)
    if getattr(args, "k", None) and isinstance(args.k, list):
        over["cluster_counts"] = tuple(args.k)
        over["grids"] = {a: {kk: v for kk, v in g.items() if kk != "k"} for a, g in cfg.grids.items()}
    if getattr(args, "resolution", None) and isinstance(args.resolution, list):
        over["resolutions"] = tuple(args.resolution)
        grids = over.get("grids", cfg.grids)
        over["grids"] = {a: {kk: v for kk, v in g.items() if kk != "resolution"} for a, g in grids.items()}
    return replace(cfg, **over)


def cmd_stats(args) -> int:
    d = _load(args)
    if d.n_interactions == 0:
        print("warning: dataset is empty after pruning", file=sys.stderr)
        return 0
    st = ds.stats(d, args.domain)
    if args.json:
        print(st.to_json())
    else:
        print(ds.TABLE_HEADER)
        print(st.table_row(d.source))
    return 0


def cmd_prune(args) -> int:
    d = _load(args)
    out = _out(args, PRUNED_DIR)
    ds.write_dump(d, out)
    if d.n_interactions == 0:
        print("warning: five-core pruning produced an empty dataset", file=sys.stderr)
    else:
        print(f"{d.n_users} users, {d.n_items} items, {d.n_interactions} interactions -> {out}", file=sys.stderr)
    return 0


def cmd_cluster(args) -> int:
    d = _load(args)
    params = {}
    if args.approach != "louvain":
        params["k"] = args.k if args.k is not None else 2
    if args.approach in ("louvain", "greedy_modularity"):
        params["resolution"] = args.resolution if args.resolution is not None else 1.0
    seed = args.seed if args.seed is not None else 42
    cs = cluster_users(d, args.approach, params, seed=seed, timeout=getattr(args, "cluster_timeout", None))
    out = _out(args, ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "clusters.json"
    path.write_text(json.dumps({"seed": seed, **cs.to_dict()}) + "\n", encoding="utf-8")
    print(f"{cs.n_clusters} clusters, populations {cs.populations.tolist()} -> {path}", file=sys.stderr)
    return 0


def cmd_search(args) -> int:
    d = _load(args)
    cfg = _cfg_from_args(args)
    out = _out(args, ".")
    out.mkdir(parents=True, exist_ok=True)
    with TrialLog(out / "trials.jsonl", mode="w") as log:
        runner = _Runner(cfg, log)
        try:
            name = d.source or "dataset"
            if args.clusters:
                cs = ClusterSet.from_dict(json.loads(Path(args.clusters).read_text(encoding="utf-8")))
                if len(cs.assignment) != d.n_users:
                    raise ValueError("cluster assignment does not match the dataset's user count")
                res = run_config(d, cs.approach, cs.params, cfg, None, name, runner, cluster_set=cs)
                payload = res.to_dict()
            else:
                payload = {"approach": BASELINE, **run_baseline(d, cfg, name, runner).to_dict()}
        finally:
            runner.close()
    path = out / "search.json"
    path.write_text(json.dumps({"seed": cfg.seed, **payload}, indent=2) + "\n", encoding="utf-8")
    print(f"search results -> {path}", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = _cfg_from_args(args, cfg)
    if args.input:
        p = Path(args.input)
        name = p.name if p.is_dir() else p.parent.name or p.stem
        cfg = replace(cfg, datasets=[DatasetSpec(name, args.input, args.schema or "default", args.min_rating,
                                                 not args.no_prune)])
    if not cfg.datasets:
        raise SystemExit(2)
    out = _out(args, cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        print(f"error: output directory {out} is not writable: {e}", file=sys.stderr)
        return 1
    report, _ = run_study(cfg, out)
    for d in report.to_dict()["datasets"]:
        mb = d["max_best"]
        if mb:
            print(f"{d['name']}: baseline nDCG@10 {d['baseline']['mean_ndcg']:.3f}; best {mb['approach']} "
                  f"{mb['params']} {mb['combined_ndcg']:.3f} ({100 * (mb['delta_rel'] or 0):+.2f}%)", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    src = Path(args.input)
    study = json.loads((src / "study.json").read_text(encoding="utf-8"))
    runtime = src / "runtime.json"
    ledger = json.loads(runtime.read_text(encoding="utf-8")) if runtime.exists() else None
    for p in emit_reports(study, _out(args, str(src)), ledger):
        print(p)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and not args.config and not args.input:
        parser.error("run needs --config or --input")
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    handler = {"stats": cmd_stats, "prune": cmd_prune, "cluster": cmd_cluster, "search": cmd_search,
               "run": cmd_run, "report": cmd_report}[args.command]
    try:
        return handler(args)
    except (OSError, ValueError, ds.DatasetError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
