"""Desk-scale end-to-end run on MovieLens-100k, then the closure check.

    python3 scripts/desk_study.py [--out results/desk] [--workers 1]
"""

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from recsel.config import load_config
from recsel.pipeline import run_study

sys.path.insert(0, str(Path(__file__).resolve().parent))
from reaggregate import check  # noqa: E402

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(HERE / "desk.conf"))
    ap.add_argument("--out", default=None)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s", stream=sys.stderr)

    cfg = load_config(args.config)
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    out = Path(args.out or cfg.out)
    t0 = time.perf_counter()
    report, _ = run_study(cfg, out)
    elapsed = time.perf_counter() - t0

    data = report.to_dict()
    for d in data["datasets"]:
        print(f"{d['name']}: baseline nDCG@10 = {d['baseline']['mean_ndcg']:.4f}")
        for c in d["configs"]:
            if c["combined"]:
                print(f"  {c['approach']:<14} {str(c['params']):<22} {c['n_clusters']} clusters  "
                      f"nDCG@10 = {c['combined']['combined_ndcg']:.4f}  ({100 * c['combined']['delta_rel']:+.2f}%)")
            else:
                print(f"  {c['approach']:<14} {str(c['params']):<22} {c['status']}")
        mb = d["max_best"]
        print(f"  max-best: {mb['approach']} {mb['params']}  {mb['combined_ndcg']:.4f}")
    n, worst, ok = check(out)
    print(f"closure: {n} scores, max |diff| {worst:.2e} -> {'ok' if ok else 'FAILED'}")
    print(f"elapsed {elapsed / 60:.1f} min; reports in {out}")


if __name__ == "__main__":
    main()
