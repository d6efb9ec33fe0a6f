"""Recompute every combined score from a study's trials.jsonl and compare with study.json.

    python3 scripts/reaggregate.py results/desk
"""

import json
import math
import sys
from collections import defaultdict
from pathlib import Path


def reaggregate(log_path):
    """{(dataset, approach, params-json): (ndcg, precision, weights)} from the "test" records."""
    cells = defaultdict(lambda: defaultdict(lambda: {"ndcg": [], "precision": [], "pop": None, "U": None}))
    for line in Path(log_path).read_text(encoding="utf-8").splitlines():
        r = json.loads(line)
        if r["kind"] != "test":
            continue
        key = (r["dataset"], r["approach"], json.dumps(r["params"], sort_keys=True))
        cell = cells[key][r["cluster"]]
        cell[r["metric"]].append(r[r["metric"]])
        cell["pop"], cell["U"] = r["population"], r["n_total_users"]
    out = {}
    for key, clusters in cells.items():
        U = next(iter(clusters.values()))["U"]
        w = [clusters[c]["pop"] / U for c in sorted(clusters)]
        nd = math.fsum(wc * math.fsum(clusters[c]["ndcg"]) / len(clusters[c]["ndcg"])
                       for wc, c in zip(w, sorted(clusters)))
        pr = math.fsum(wc * math.fsum(clusters[c]["precision"]) / len(clusters[c]["precision"])
                       for wc, c in zip(w, sorted(clusters)))
        out[key] = (nd, pr, w)
    return out


def check(study_dir, tol=1e-9):
    study_dir = Path(study_dir)
    study = json.loads((study_dir / "study.json").read_text(encoding="utf-8"))
    agg = reaggregate(study_dir / "trials.jsonl")
    worst = 0.0
    n = 0
    for d in study["datasets"]:
        b = agg[(d["name"], "baseline", "{}")]
        worst = max(worst, abs(b[0] - d["baseline"]["mean_ndcg"]), abs(b[1] - d["baseline"]["mean_precision"]))
        for c in d["configs"]:
            if c["combined"] is None:
                continue
            nd, pr, w = agg[(d["name"], c["approach"], json.dumps(c["params"], sort_keys=True))]
            worst = max(worst, abs(nd - c["combined"]["combined_ndcg"]),
                        abs(pr - c["combined"]["combined_precision"]))
            if abs(math.fsum(w) - 1.0) > 1e-12:
                raise AssertionError(f"weights for {c['approach']} {c['params']} sum to {math.fsum(w)!r}")
            n += 1
    return n, worst, worst <= tol


if __name__ == "__main__":
    n, worst, ok = check(sys.argv[1] if len(sys.argv) > 1 else "results/desk")
    print(f"{n} combined scores re-aggregated; max abs difference {worst:.3e}: {'OK' if ok else 'MISMATCH'}")
    sys.exit(0 if ok else 1)
