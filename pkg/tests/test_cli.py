import csv
import datetime as dt
import json

import pytest

from soanno import simulate
from soanno.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DEGENERATE, EXIT_OK, RunConfig, main
from tests.conftest import make_post


def run_dir_of(capsys):
    from pathlib import Path

    return Path(capsys.readouterr().out.strip().splitlines()[-1])


@pytest.fixture
def workspace(tmp_path):
    corp = simulate.keyword_planted_corpus(
        400, seed=21, noise=0.1, months=4, first_month=dt.date(2020, 3, 1)
    )
    simulate.write_corpus_jsonl(corp.posts, tmp_path / "corpus.jsonl")
    simulate.write_annotations_jsonl(corp.annotations, tmp_path / "annotations.jsonl")
    config = {
        "seed": 7,
        "paths": {
            "corpus": str(tmp_path / "corpus.jsonl"),
            "annotations": str(tmp_path / "annotations.jsonl"),
            "outdir": str(tmp_path / "runs"),
        },
        "vocab": {"min_df": 0.0025, "max_df": 0.5},
        "lda": {"candidates": [], "K": 8, "iterations": 80, "burn_in": 10},
        "model": {"loss": "hinge", "grid": {"lam": [0.0001], "epochs": [30]}},
        "eval": {
            "test_frac": 0.2,
            "k_folds": 3,
            "stratify_by": "intensity",
            "cutoff_month": "2020-06",
            "future_window": ["2020-05-01", "2020-06-30"],
            "human_eval_n": 10,
        },
        "sample": {"per_month": 30},
    }
    (tmp_path / "cfg.yaml").write_text(json.dumps(config))
    return tmp_path


class TestConfig:
    def test_missing_config_file(self, tmp_path):
        assert main(["ingest", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG

    def test_missing_required_path(self, tmp_path):
        (tmp_path / "c.yaml").write_text("seed: 1\npaths: {}\n")
        assert main(["ingest", "--config", str(tmp_path / "c.yaml")]) == EXIT_CONFIG

    def test_dotted_override(self, workspace):
        cfg = RunConfig.from_file(workspace / "cfg.yaml", ["eval.k_folds=4", "seed=9"])
        assert cfg.k_folds == 4
        assert cfg.seed == 9
        assert cfg.lda.seed == 9

    def test_snapshot_excludes_outdir(self, workspace):
        cfg = RunConfig.from_file(workspace / "cfg.yaml")
        assert "outdir" not in cfg.snapshot()["paths"]


class TestIngest:
    def test_table_style_stats(self, tmp_path, capsys):
        # 1023 posts from 656 authors in one month -> 1.56 posts per user
        posts = []
        for i in range(1023):
            posts.append(
                make_post(
                    id=f"p{i}",
                    author=f"u{i % 656}",
                    when=dt.datetime(2020, 3, 1 + i % 28, tzinfo=dt.timezone.utc),
                )
            )
        simulate.write_corpus_jsonl(posts, tmp_path / "corpus.jsonl")
        (tmp_path / "c.yaml").write_text(
            json.dumps({"paths": {"corpus": str(tmp_path / "corpus.jsonl"), "outdir": str(tmp_path / "runs")}})
        )
        assert main(["ingest", "--config", str(tmp_path / "c.yaml")]) == EXIT_OK
        run_dir = run_dir_of(capsys)
        with open(run_dir / "corpus_stats.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows == [{"month": "2020-03", "posts": "1023", "posts_per_user": "1.56"}]

    def test_empty_corpus_warns_but_succeeds(self, tmp_path, capsys, caplog):
        (tmp_path / "corpus.jsonl").write_text("")
        (tmp_path / "c.yaml").write_text(
            json.dumps({"paths": {"corpus": str(tmp_path / "corpus.jsonl"), "outdir": str(tmp_path / "runs")}})
        )
        with caplog.at_level("WARNING"):
            assert main(["ingest", "--config", str(tmp_path / "c.yaml")]) == EXIT_OK
        run_dir = run_dir_of(capsys)
        assert (run_dir / "corpus_stats.csv").read_text().strip() == "month,posts,posts_per_user"

    def test_rerun_identical_bytes(self, workspace, capsys):
        cfgp = str(workspace / "cfg.yaml")
        assert main(["ingest", "--config", cfgp, "--outdir", str(workspace / "i1")]) == EXIT_OK
        d1 = run_dir_of(capsys)
        assert main(["ingest", "--config", cfgp, "--outdir", str(workspace / "i2")]) == EXIT_OK
        d2 = run_dir_of(capsys)
        for name in ("corpus_stats.csv", "manifest.json", "skip_report.csv"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_existing_run_dir_requires_force(self, workspace, capsys):
        cfgp = str(workspace / "cfg.yaml")
        assert main(["ingest", "--config", cfgp]) == EXIT_OK
        capsys.readouterr()
        assert main(["ingest", "--config", cfgp]) == EXIT_CONFIG
        assert main(["ingest", "--config", cfgp, "--force"]) == EXIT_OK


class TestTrainPredict:
    def test_train_then_predict_and_evaluate(self, workspace, capsys):
        cfgp = str(workspace / "cfg.yaml")
        assert main(["train", "--config", cfgp]) == EXIT_OK
        bundle = run_dir_of(capsys)
        manifest = json.loads((bundle / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["seed"] == 7
        assert set(manifest["inputs"]) >= {"corpus", "annotations", "lexicon", "stopwords"}
        split = json.loads((bundle / "split.json").read_text())
        assert len(split["train_ids"]) + len(split["test_ids"]) == 400
        with open(bundle / "feature_importance.csv") as fh:
            importance = list(csv.DictReader(fh))
        assert {r["classifier"] for r in importance} >= {"health", "intensity"}
        assert all(int(r["rank"]) <= 10 for r in importance)

        assert (
            main(["evaluate", "--config", cfgp, "--protocol", "main_split", "--bundle", str(bundle)])
            == EXIT_OK
        )
        eval_dir = run_dir_of(capsys)
        report = json.loads((eval_dir / "eval_main_split.json").read_text())
        assert "health" in report["per_label"]
        assert report["baseline"]
        with open(eval_dir / "eval_main_split.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["variable"] for r in rows} >= {"intensity", "health"}

        assert main(["predict", "--config", cfgp, "--bundle", str(bundle)]) == EXIT_OK
        pred_dir = run_dir_of(capsys)
        lines = (pred_dir / "predictions.jsonl").read_text().splitlines()
        assert len(lines) == 400
        row = json.loads(lines[0])
        assert set(row) >= {"id", "intensity", "scores", "health", "travel"}

        assert main(["trends", "--config", cfgp, "--predictions", str(pred_dir / "predictions.jsonl")]) == EXIT_OK
        trends_dir = run_dir_of(capsys)
        assert (trends_dir / "soa_trend_monthly.csv").exists()
        assert (trends_dir / "intensity_trend_weekly.csv").exists()

        assert main(["correlate", "--config", cfgp, "--predictions", str(pred_dir / "predictions.jsonl")]) == EXIT_OK
        corr_dir = run_dir_of(capsys)
        with open(corr_dir / "correlations.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 45

    def test_predict_flags_unscorable_posts(self, workspace, capsys):
        # append a punctuation-only post: active but without readable words
        with open(workspace / "corpus.jsonl", "a") as fh:
            fh.write(
                json.dumps(
                    {
                        "id": "weird",
                        "author": "u0",
                        "title": "??",
                        "selftext": "!!",
                        "created_utc": 1584700000,
                        "status": "active",
                    }
                )
                + "\n"
            )
        cfgp = str(workspace / "cfg.yaml")
        assert main(["train", "--config", cfgp, "--outdir", str(workspace / "t2")]) == EXIT_OK
        bundle = run_dir_of(capsys)
        assert main(["predict", "--config", cfgp, "--bundle", str(bundle)]) == EXIT_OK
        pred_dir = run_dir_of(capsys)
        rows = [json.loads(l) for l in (pred_dir / "predictions.jsonl").read_text().splitlines()]
        weird = [r for r in rows if r["id"] == "weird"]
        assert len(weird) == 1
        assert weird[0]["readability_missing"] is True
        assert isinstance(weird[0]["health"], bool)

    def test_missing_intensity_column_fails_before_training(self, workspace):
        lines = (workspace / "annotations.jsonl").read_text().splitlines()
        rows = [json.loads(l) for l in lines]
        for row in rows:
            row.pop("intensity")
        (workspace / "annotations.jsonl").write_text(
            "\n".join(json.dumps(r) for r in rows) + "\n"
        )
        cfgp = str(workspace / "cfg.yaml")
        assert main(["train", "--config", cfgp]) == EXIT_DATA
        assert not (workspace / "runs").exists()

    def test_degenerate_labels_exit_code(self, workspace):
        rows = [
            json.loads(l) for l in (workspace / "annotations.jsonl").read_text().splitlines()
        ]
        for row in rows:
            for name in simulate.PAPER_RATIOS:
                row[name] = False
            row["intensity"] = 1
        (workspace / "annotations.jsonl").write_text(
            "\n".join(json.dumps(r) for r in rows) + "\n"
        )
        assert main(["train", "--config", str(workspace / "cfg.yaml")]) == EXIT_DEGENERATE


class TestOtherCommands:
    def test_sample(self, workspace, capsys):
        assert main(["sample", "--config", str(workspace / "cfg.yaml")]) == EXIT_OK
        run_dir = run_dir_of(capsys)
        lines = (run_dir / "sample.jsonl").read_text().splitlines()
        assert len(lines) == 30 * 4

    def test_last_month_protocol(self, workspace, capsys):
        cfgp = str(workspace / "cfg.yaml")
        assert main(["evaluate", "--config", cfgp, "--protocol", "last_month"]) == EXIT_OK
        run_dir = run_dir_of(capsys)
        report = json.loads((run_dir / "eval_last_month.json").read_text())
        assert report["manifest"]["cutoff_month"] == "2020-06"
        assert report["cv_reference"]

    def test_future_window_protocol(self, workspace, capsys):
        cfgp = str(workspace / "cfg.yaml")
        assert main(["train", "--config", cfgp, "--outdir", str(workspace / "t3")]) == EXIT_OK
        bundle = run_dir_of(capsys)
        assert (
            main(["evaluate", "--config", cfgp, "--protocol", "future_window", "--bundle", str(bundle)])
            == EXIT_OK
        )
        run_dir = run_dir_of(capsys)
        assert (run_dir / "eval_future_window.json").exists()

    def test_agreement(self, workspace, capsys):
        ratings = workspace / "ratings.csv"
        with open(ratings, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["item_id", "rater_id", "variable", "value"])
            r1 = [1, 0, 1, 1]
            r2 = [1, 0, 0, 1]
            for i, (a, b) in enumerate(zip(r1, r2)):
                writer.writerow([f"it{i}", "r1", "health", a])
                writer.writerow([f"it{i}", "r2", "health", b])
        cfgp = str(workspace / "cfg.yaml")
        assert main(["agreement", "--config", cfgp, "--ratings", str(ratings)]) == EXIT_OK
        run_dir = run_dir_of(capsys)
        summary = json.loads((run_dir / "agreement.json").read_text())
        assert summary["health"] == pytest.approx(0.7273, abs=1e-4)

    def test_human_eval_export(self, workspace, capsys):
        cfgp = str(workspace / "cfg.yaml")
        assert main(["human-eval-export", "--config", cfgp]) == EXIT_OK
        run_dir = run_dir_of(capsys)
        lines = (run_dir / "human_eval_sheet.csv").read_text().splitlines()
        assert len(lines) == 11  # header + human_eval_n rows
        sealed = (run_dir / "human_eval_predictions.jsonl").read_text().splitlines()
        assert len(sealed) == 10
