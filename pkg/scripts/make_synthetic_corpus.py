#!/usr/bin/env python3
"""Generate a keyword-planted synthetic corpus for pipeline experiments.

Writes corpus.jsonl and annotations.jsonl plus a ready-to-run config so
the full CLI flow works out of the box:

    python3 scripts/make_synthetic_corpus.py --outdir demo --posts 2000
    soanno train --config demo/config.yaml
"""

import argparse
import datetime as dt
from pathlib import Path

import yaml

from soanno import simulate


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", type=Path, default=Path("demo"))
    parser.add_argument("--posts", type=int, default=2000)
    parser.add_argument("--months", type=int, default=8)
    parser.add_argument("--seed", type=int, default=21)
    parser.add_argument("--noise", type=float, default=0.1)
    parser.add_argument(
        "--drift-month",
        default=None,
        help="YYYY-MM from which the guide keywords change vocabulary",
    )
    args = parser.parse_args()

    args.outdir.mkdir(parents=True, exist_ok=True)
    corp = simulate.keyword_planted_corpus(
        n_posts=args.posts,
        seed=args.seed,
        noise=args.noise,
        months=args.months,
        first_month=dt.date(2020, 2, 1),
        guide_drift_month=args.drift_month,
    )
    simulate.write_corpus_jsonl(corp.posts, args.outdir / "corpus.jsonl")
    simulate.write_annotations_jsonl(corp.annotations, args.outdir / "annotations.jsonl")

    months = sorted(
        {p.created_date().strftime("%Y-%m") for p in corp.posts}
    )
    config = {
        "seed": args.seed,
        "paths": {
            "corpus": str(args.outdir / "corpus.jsonl"),
            "annotations": str(args.outdir / "annotations.jsonl"),
            "outdir": str(args.outdir / "runs"),
        },
        "vocab": {"min_df": 0.0025, "max_df": 0.5, "ngram_orders": [1, 2, 3]},
        "lda": {"candidates": [10, 15, 20], "K": 15, "iterations": 300, "burn_in": 50},
        "model": {"loss": "hinge", "grid": {"lam": [0.0001, 0.001], "epochs": [50, 150]}},
        "eval": {
            "test_frac": 0.2,
            "k_folds": 5,
            "stratify_by": "intensity",
            "cutoff_month": months[-1],
            "future_window": [f"{months[-2]}-01", f"{months[-1]}-28"],
            "human_eval_n": 50,
        },
        "sample": {"per_month": 100, "merge_months": [months[:2]]},
    }
    (args.outdir / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=False))
    print(f"wrote {args.posts} posts across {len(months)} months to {args.outdir}/")
    print(f"config: {args.outdir}/config.yaml")


if __name__ == "__main__":
    main()
