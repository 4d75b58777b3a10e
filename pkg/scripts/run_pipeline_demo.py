#!/usr/bin/env python3
"""End-to-end pipeline demo on a synthetic corpus.

Generates data, then drives every CLI stage in order: ingest, sample,
train, evaluate (all three protocols), predict, trends, correlate, and
human-eval-export. Prints the run directory of each stage.
"""

import argparse
import shutil
import sys
import tempfile
from pathlib import Path

from soanno.cli import main as cli


def stage(argv: list[str]) -> Path:
    print(f"$ soanno {' '.join(argv)}")
    from io import StringIO
    import contextlib

    captured = StringIO()
    with contextlib.redirect_stdout(captured):
        code = cli(argv)
    output = captured.getvalue().strip()
    print(output)
    if code != 0:
        print(f"stage failed with exit code {code}", file=sys.stderr)
        sys.exit(code)
    return Path(output.splitlines()[-1])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=None)
    parser.add_argument("--posts", type=int, default=1200)
    parser.add_argument("--keep", action="store_true", help="keep the workdir")
    args = parser.parse_args()

    workdir = args.workdir or Path(tempfile.mkdtemp(prefix="soanno-demo-"))
    workdir.mkdir(parents=True, exist_ok=True)

    import make_synthetic_corpus  # noqa: F401  (same directory)

    sys.argv = [
        "make_synthetic_corpus.py",
        "--outdir",
        str(workdir),
        "--posts",
        str(args.posts),
        "--months",
        "6",
    ]
    make_synthetic_corpus.main()
    config = str(workdir / "config.yaml")

    stage(["ingest", "--config", config])
    stage(["sample", "--config", config])
    bundle = stage(["train", "--config", config])
    stage(["evaluate", "--config", config, "--protocol", "main_split", "--bundle", str(bundle)])
    stage(["evaluate", "--config", config, "--protocol", "last_month"])
    stage(["evaluate", "--config", config, "--protocol", "future_window", "--bundle", str(bundle)])
    pred_dir = stage(["predict", "--config", config, "--bundle", str(bundle)])
    predictions = str(pred_dir / "predictions.jsonl")
    stage(["trends", "--config", config, "--predictions", predictions])
    stage(["correlate", "--config", config, "--predictions", predictions])
    stage(["human-eval-export", "--config", config, "--predictions", predictions])

    print(f"\nall stages finished; outputs under {workdir}/runs")
    if not args.keep and args.workdir is None:
        shutil.rmtree(workdir)
        print("(temporary workdir removed; pass --keep or --workdir to retain)")


if __name__ == "__main__":
    main()
