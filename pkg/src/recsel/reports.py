"""Report files: study.json, per-approach figure CSVs, metrics, frequency, runtime.

Everything except ``runtime*.{csv,json}`` is a deterministic function of the
study content, so two runs with the same seed compare byte-for-byte.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

from .clustering import APPROACHES

FIG_COLUMNS = ["dataset", "x", "ndcg10", "precision10", "status"]
METRIC_COLUMNS = ["dataset", "approach", "params", "fold", "cluster", "algorithm", "hyperparams", "ndcg@10",
                  "precision@10", "n_users", "fallback"]


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _x_label(approach: str, params: dict) -> str:
    if approach == "louvain":
        return repr(float(params["resolution"]))
    return str(params["k"])


def figure_rows(study: dict, approach: str) -> list[list[str]]:
    """One row per x value and dataset, plus a ``base`` row per dataset.

    Greedy modularity keeps, per cluster count, the best resolution.
    """
    metric = study.get("metric", "ndcg")
    rows = []
    for d in study["datasets"]:
        b = d["baseline"]
        rows.append([d["name"], "base", _num(b["mean_ndcg"]), _num(b["mean_precision"]), "ok"])
        by_x: dict[str, list[dict]] = {}
        for c in d["configs"]:
            if c["approach"] == approach:
                by_x.setdefault(_x_label(approach, c["params"]), []).append(c)
        for x, group in by_x.items():
            ok = [c for c in group if c["status"] == "ok"]
            if ok:
                key = "combined_ndcg" if metric == "ndcg" else "combined_precision"
                best = max(enumerate(ok), key=lambda ic: (ic[1]["combined"][key], -ic[0]))[1]
                rows.append([d["name"], x, _num(best["combined"]["combined_ndcg"]),
                             _num(best["combined"]["combined_precision"]), "ok"])
            else:
                rows.append([d["name"], x, "", "", group[0]["status"]])
    return rows


def metric_rows(study: dict) -> list[list[Any]]:
    rows = []
    for d in study["datasets"]:
        groups = [("baseline", {}, {"clusters": [d["baseline"]]})]
        groups += [(c["approach"], c["params"], c["combined"]) for c in d["configs"] if c["combined"]]
        for approach, params, comb in groups:
            for cs in comb["clusters"]:
                for w in cs["winners"]:
                    rows.append([d["name"], approach, json.dumps(params, sort_keys=True), w["fold"], cs["cluster"],
                                 w["ndcg"]["algorithm"], json.dumps(w["ndcg"]["hyperparams"], sort_keys=True),
                                 _num(w["ndcg"]["ndcg"]), _num(w["precision"]["precision"]), w["ndcg"]["n_users"],
                                 int(w["fallback"])])
    return rows


def _write_csv(path: Path, header: list[str], rows, seed) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# recsel seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_reports(study, out_dir, ledger=None) -> list[Path]:
    """Write all report files and return their paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e}") from e
    data = study if isinstance(study, dict) else study.to_dict()
    seed = data.get("seed")
    written = []

    p = out / "study.json"
    p.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    written.append(p)

    approaches = [a for a in APPROACHES if a in data.get("config", {}).get("approaches", APPROACHES)]
    for a in approaches:
        p = out / f"fig_{a}.csv"
        _write_csv(p, FIG_COLUMNS, figure_rows(data, a) if data["datasets"] else [], seed)
        written.append(p)

    p = out / "metrics.csv"
    _write_csv(p, METRIC_COLUMNS, metric_rows(data), seed)
    written.append(p)

    p = out / "frequency.csv"
    freq = data.get("algorithm_frequency", {})
    _write_csv(p, ["approach", "algorithm", "count", "percent"],
               [[a, alg, n, _num(f["percent"][alg])] for a, f in freq.items() for alg, n in f["counts"].items()],
               seed)
    written.append(p)

    p = out / "max_best.csv"
    rows = []
    for d in data["datasets"]:
        mb = d.get("max_best")
        if mb:
            rows.append([d["name"], mb["approach"], json.dumps(mb["params"], sort_keys=True),
                         _num(mb["combined_ndcg"]), _num(d["baseline"]["mean_ndcg"]), _num(mb["delta_abs"]),
                         _num(mb["delta_rel"])])
    _write_csv(p, ["dataset", "approach", "params", "combined_ndcg10", "baseline_ndcg10", "delta_abs", "delta_rel"],
               rows, seed)
    written.append(p)

    if ledger is not None:
        from .pipeline import RuntimeLedger
        led = ledger if isinstance(ledger, RuntimeLedger) else RuntimeLedger.from_dict(ledger)
        p = out / "runtime.csv"
        _write_csv(p, ["approach", "stage", "parallel_seconds"],
                   [[a, s, f"{v:.6f}"] for a, s, v in led.summary()], seed)
        written.append(p)
        p = out / "runtime.json"
        p.write_text(json.dumps({"seed": seed, **led.to_dict()}, indent=1) + "\n", encoding="utf-8")
        written.append(p)
    return written
