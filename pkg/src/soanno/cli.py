"""Command-line orchestration: config-driven, deterministic runs.

Every command validates its config and hashes its inputs before writing
anything, then writes all outputs under <outdir>/<run-id>/ where run-id
is a digest of the manifest. Identical config + inputs therefore yield
byte-identical manifests and outputs.

Exit codes: 0 success, 2 validation error, 3 data error, 4 training
degeneracy.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from . import SOA_LABELS, __version__
from . import analysis, corpus, evaluation, features, models, sentiment, textanalysis, topics
from .corpus import CorpusError, PostCollection
from .evaluation import GridSearchError
from .features import FeatureBundle, VocabConfig, VocabularyError
from .models import DegenerateLabelsError, TrainConfig
from .topics import LdaConfig, LdaError

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    seed: int = 0
    paths: dict = field(default_factory=dict)
    schema: dict = field(default_factory=dict)
    vocab: VocabConfig = field(default_factory=VocabConfig)
    lda: LdaConfig = field(default_factory=lambda: LdaConfig(K=15))
    lda_candidates: tuple[int, ...] = (10, 15, 20)
    grid: tuple[TrainConfig, ...] = evaluation.DEFAULT_GRID
    test_frac: float = 0.2
    k_folds: int = 5
    stratify_by: str = "intensity"
    cutoff_month: str = ""
    future_window: tuple[str, str] = ("", "")
    human_eval_n: int = 50
    sample_per_month: int = 100
    merge_months: tuple[tuple[str, ...], ...] = ()
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path, overrides: Sequence[str] = ()) -> "RunConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, value = item.split("=", 1)
            _set_dotted(raw, key.strip(), yaml.safe_load(value))
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        try:
            vocab_raw = dict(raw.get("vocab", {}))
            if "ngram_orders" in vocab_raw:
                vocab_raw["ngram_orders"] = frozenset(vocab_raw["ngram_orders"])
            vocab = VocabConfig(**vocab_raw)
            lda_raw = dict(raw.get("lda", {}))
            candidates = tuple(lda_raw.pop("candidates", (10, 15, 20)))
            lda_raw.setdefault("K", 15)
            lda_raw.setdefault("seed", raw.get("seed", 0))
            lda = LdaConfig(**lda_raw)
            model_raw = dict(raw.get("model", {}))
            grid_spec = model_raw.get("grid", {})
            loss = model_raw.get("loss", "hinge")
            lams = grid_spec.get("lam", [1e-4, 1e-3, 1e-2, 1e-1])
            epochs = grid_spec.get("epochs", [5, 20, 50])
            grid = tuple(
                TrainConfig(loss=loss, lam=float(l), epochs=int(e), seed=raw.get("seed", 0))
                for l in lams
                for e in epochs
            )
            eval_raw = dict(raw.get("eval", {}))
            sample_raw = dict(raw.get("sample", {}))
            window = eval_raw.get("future_window", ["", ""])
            return cls(
                seed=int(raw.get("seed", 0)),
                paths=dict(raw.get("paths", {})),
                schema=dict(raw.get("schema", {})),
                vocab=vocab,
                lda=lda,
                lda_candidates=candidates,
                grid=grid,
                test_frac=float(eval_raw.get("test_frac", 0.2)),
                k_folds=int(eval_raw.get("k_folds", 5)),
                stratify_by=str(eval_raw.get("stratify_by", "intensity")),
                cutoff_month=str(eval_raw.get("cutoff_month", "")),
                future_window=(str(window[0]), str(window[1])),
                human_eval_n=int(eval_raw.get("human_eval_n", 50)),
                sample_per_month=int(sample_raw.get("per_month", 100)),
                merge_months=tuple(
                    tuple(group) for group in sample_raw.get("merge_months", [])
                ),
                raw=raw,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    def path(self, name: str) -> Path | None:
        value = self.paths.get(name)
        return Path(value) if value else None

    def require_path(self, name: str) -> Path:
        value = self.path(name)
        if value is None:
            raise ConfigError(f"config paths.{name} is required for this command")
        if not value.exists():
            raise ConfigError(f"paths.{name}: {value} does not exist")
        return value

    def snapshot(self) -> dict:
        """Config as given, minus the output location."""
        snap = json.loads(json.dumps(self.raw, sort_keys=True))
        snap.get("paths", {}).pop("outdir", None)
        return snap


def _set_dotted(raw: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted!r}: {key} is not a mapping")
    node[keys[-1]] = value


# ---------------------------------------------------------------------------
# resources, manifests, run directories


def _load_resources(cfg: RunConfig) -> tuple[sentiment.SentimentLexicon, frozenset[str]]:
    lexicon = sentiment.load_lexicon(
        cfg.path("lexicon"), cfg.path("boosters"), cfg.path("negators")
    )
    stopwords = textanalysis.load_stopwords(cfg.path("stopwords"))
    return lexicon, stopwords


def _hash_bytes(payload: bytes) -> dict:
    return {"sha256": hashlib.sha256(payload).hexdigest(), "bytes": len(payload)}


def _hash_file(path: Path) -> dict:
    return _hash_bytes(path.read_bytes())


def _data_file_hash(cfg: RunConfig, key: str, packaged: str) -> dict:
    explicit = cfg.path(key)
    if explicit is not None:
        return _hash_file(explicit)
    payload = resources.files("soanno.data").joinpath(packaged).read_bytes()
    return _hash_bytes(payload)


def build_manifest(command: str, cfg: RunConfig, inputs: Mapping[str, dict]) -> dict:
    return {
        "tool": {"name": "soanno", "version": __version__},
        "command": command,
        "seed": cfg.seed,
        "config": cfg.snapshot(),
        "inputs": dict(sorted(inputs.items())),
    }


def _canonical(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":"))


def run_id_of(manifest: dict) -> str:
    return hashlib.sha256(_canonical(manifest).encode("utf-8")).hexdigest()[:12]


def prepare_run_dir(cfg: RunConfig, manifest: dict, outdir: str | None, force: bool) -> Path:
    base = Path(outdir) if outdir else (cfg.path("outdir") or Path("runs"))
    run_dir = base / f"{manifest['command']}-{run_id_of(manifest)}"
    if run_dir.exists():
        if not force:
            raise ConfigError(
                f"run directory {run_dir} already exists (use --force to overwrite)"
            )
        for old in sorted(run_dir.rglob("*"), reverse=True):
            if old.is_file():
                old.unlink()
            else:
                old.rmdir()
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return run_dir


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_corpus(cfg: RunConfig) -> PostCollection:
    path = cfg.require_path("corpus")
    try:
        return corpus.load_posts(path, cfg.schema or None)
    except CorpusError as exc:
        raise DataError(str(exc)) from exc


def _load_annotated(cfg: RunConfig, collection: PostCollection) -> list[corpus.AnnotatedPost]:
    path = cfg.require_path("annotations")
    posts_by_id = {p.id: p for p in collection.active}
    try:
        annotated = corpus.load_annotations(path, posts_by_id)
    except (CorpusError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    if not annotated:
        raise DataError(f"{path}: no usable annotations")
    return annotated


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: RunConfig, args) -> int:
    inputs = {"corpus": _hash_file(cfg.require_path("corpus"))}
    manifest = build_manifest("ingest", cfg, inputs)
    collection = _load_corpus(cfg)
    run_dir = prepare_run_dir(cfg, manifest, args.outdir, args.force)

    buckets = corpus.bucket_by_period(collection.active, "month")
    with open(run_dir / "corpus_stats.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["month", "posts", "posts_per_user"])
        for key, posts in buckets.items():
            authors = len({p.author_id for p in posts})
            per_user = len(posts) / authors if authors else 0.0
            writer.writerow([key.label(), len(posts), f"{per_user:.2f}"])
    collection.write_skip_report(run_dir / "skip_report.csv")
    _write_json(
        run_dir / "ingest_summary.json",
        {
            "total_lines": collection.total_lines,
            "active": len(collection.active),
            "skipped": len(collection.skips),
            "unusable": len(collection.unusable),
        },
    )
    if not collection.active:
        log.warning("corpus has no active posts")
    print(run_dir)
    return EXIT_OK


def cmd_sample(cfg: RunConfig, args) -> int:
    inputs = {"corpus": _hash_file(cfg.require_path("corpus"))}
    manifest = build_manifest("sample", cfg, inputs)
    collection = _load_corpus(cfg)
    sampled = corpus.stratified_sample(
        collection, cfg.sample_per_month, cfg.seed, cfg.merge_months
    )
    run_dir = prepare_run_dir(cfg, manifest, args.outdir, args.force)
    with open(run_dir / "sample.jsonl", "w", encoding="utf-8") as fh:
        for post in sampled.active:
            fh.write(
                json.dumps(
                    {
                        "id": post.id,
                        "author": post.author_id,
                        "title": post.title,
                        "selftext": post.body,
                        "created_utc": post.created_utc,
                        "status": post.status.value,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    _write_json(
        run_dir / "sample_summary.json",
        {
            "n_sampled": len(sampled.active),
            "per_month": cfg.sample_per_month,
            "undersized_months": sampled.undersized_months,
        },
    )
    print(run_dir)
    return EXIT_OK


def _train_inputs(cfg: RunConfig) -> dict:
    return {
        "corpus": _hash_file(cfg.require_path("corpus")),
        "annotations": _hash_file(cfg.require_path("annotations")),
        "lexicon": _data_file_hash(cfg, "lexicon", "sentiment_lexicon.tsv"),
        "boosters": _data_file_hash(cfg, "boosters", "boosters.txt"),
        "negators": _data_file_hash(cfg, "negators", "negators.txt"),
        "stopwords": _data_file_hash(cfg, "stopwords", "stopwords_en.txt"),
    }


def _stratify_target(annotated: Sequence[corpus.AnnotatedPost], by: str) -> list[int]:
    if by == "intensity":
        return [models.combine_intensity_labels(a.intensity) for a in annotated]
    if by in SOA_LABELS:
        return [int(getattr(a.soa, by)) for a in annotated]
    raise ConfigError(f"eval.stratify_by must be 'intensity' or an SOA name, got {by!r}")


def cmd_train(cfg: RunConfig, args) -> int:
    manifest = build_manifest("train", cfg, _train_inputs(cfg))
    collection = _load_corpus(cfg)
    annotated = _load_annotated(cfg, collection)
    strata = _stratify_target(annotated, cfg.stratify_by)

    ids = [a.post.id for a in annotated]
    by_id = {a.post.id: a for a in annotated}
    plan = evaluation.stratified_split(
        ids, strata, test_frac=cfg.test_frac, seed=cfg.seed, strata_name=cfg.stratify_by
    )
    train_set = [by_id[i] for i in plan.train_ids]

    lexicon, stopwords = _load_resources(cfg)
    try:
        bundle, lda_table = features.fit_feature_bundle(
            [a.post for a in train_set],
            cfg.vocab,
            cfg.lda,
            lexicon,
            stopwords,
            lda_candidates=cfg.lda_candidates,
        )
        X_train = features.featurize_posts(bundle, [a.post for a in train_set])
        soa_targets, levels = evaluation.dataset_targets(train_set)
        ensemble, cv_tables, cv_reference = evaluation.train_ensemble_with_grid(
            X_train, soa_targets, levels, cfg.grid, k=cfg.k_folds, seed=cfg.seed
        )
    except (VocabularyError, LdaError) as exc:
        raise DataError(str(exc)) from exc
    if not ensemble.all_models():
        raise DegenerateLabelsError(
            "no label could be trained: " + json.dumps(ensemble.skipped, sort_keys=True)
        )

    run_dir = prepare_run_dir(cfg, manifest, args.outdir, args.force)
    features.save_vocab(
        bundle.vocab,
        run_dir / "vocab.csv",
        run_dir / "vocab_meta.json",
        bundle.flesch_mean,
        bundle.flesch_std,
    )
    topics.save_lda(bundle.lda, run_dir / "lda_meta.json", run_dir / "lda_counts.npy")
    topics.write_top_words(bundle.lda, run_dir / "lda_top_words.csv")
    models.save_ensemble(ensemble, run_dir)
    _write_json(
        run_dir / "split.json",
        {
            "train_ids": list(plan.train_ids),
            "test_ids": list(plan.test_ids),
            "seed": plan.seed,
            "stratify_by": cfg.stratify_by,
        },
    )
    _write_json(run_dir / "cv_tables.json", cv_tables)
    if lda_table:
        _write_json(run_dir / "lda_selection.json", lda_table)
    names = bundle.feature_names()
    analysis.write_feature_importance_csv(
        {
            name: analysis.top_features(model, names, n=10)
            for name, model in ensemble.all_models().items()
        },
        run_dir / "feature_importance.csv",
    )
    _write_json(
        run_dir / "bundle_meta.json",
        {
            "vocab_hash": bundle.vocab.content_hash(),
            "lda_vocab_hash": bundle.lda.vocab_hash(),
            "chosen_K": bundle.lda.K,
            "cv_reference": cv_reference,
            "skipped": ensemble.skipped,
        },
    )
    print(run_dir)
    return EXIT_OK


def _load_bundle(cfg: RunConfig, bundle_dir: Path) -> tuple[FeatureBundle, models.EnsembleModel, dict]:
    if not bundle_dir.exists():
        raise ConfigError(f"bundle directory {bundle_dir} does not exist")
    lexicon, stopwords = _load_resources(cfg)
    vocab, flesch_mean, flesch_std = features.load_vocab(
        bundle_dir / "vocab.csv", bundle_dir / "vocab_meta.json"
    )
    lda = topics.load_lda(
        bundle_dir / "lda_meta.json",
        bundle_dir / "lda_counts.npy",
        vocab.unigrams(),
    )
    bundle = FeatureBundle(
        vocab=vocab,
        lexicon=lexicon,
        lda=lda,
        stopwords=stopwords,
        flesch_mean=flesch_mean,
        flesch_std=flesch_std,
    )
    ensemble = models.load_ensemble(bundle_dir)
    split = json.loads((bundle_dir / "split.json").read_text(encoding="utf-8"))
    return bundle, ensemble, split


def _bundle_inputs(cfg: RunConfig, bundle_dir: Path) -> dict:
    inputs = _train_inputs(cfg)
    inputs["bundle_manifest"] = _hash_file(bundle_dir / "manifest.json")
    inputs["bundle_models"] = _hash_file(bundle_dir / "models.json")
    return inputs


def cmd_evaluate(cfg: RunConfig, args) -> int:
    protocol = args.protocol
    collection = _load_corpus(cfg)
    annotated = _load_annotated(cfg, collection)
    by_id = {a.post.id: a for a in annotated}

    if protocol == "last_month":
        if not cfg.cutoff_month:
            raise ConfigError("eval.cutoff_month is required for last_month")
        manifest = build_manifest("evaluate-last_month", cfg, _train_inputs(cfg))
        lexicon, stopwords = _load_resources(cfg)

        def build(posts):
            bundle, _ = features.fit_feature_bundle(
                posts, cfg.vocab, cfg.lda, lexicon, stopwords
            )
            return bundle

        try:
            report = evaluation.last_month_holdout(
                annotated,
                cfg.cutoff_month,
                build_features=build,
                featurize=features.featurize_posts,
                grid=cfg.grid,
                k=cfg.k_folds,
                seed=cfg.seed,
            )
        except evaluation.SplitError as exc:
            raise DataError(str(exc)) from exc
        run_dir = prepare_run_dir(cfg, manifest, args.outdir, args.force)
        _write_eval_outputs(report, run_dir, "last_month")
        print(run_dir)
        return EXIT_OK

    bundle_dir = Path(args.bundle) if args.bundle else None
    if bundle_dir is None:
        raise ConfigError(f"--bundle is required for protocol {protocol}")
    manifest = build_manifest(f"evaluate-{protocol}", cfg, _bundle_inputs(cfg, bundle_dir))
    bundle, ensemble, split = _load_bundle(cfg, bundle_dir)

    if protocol == "main_split":
        test_set = [by_id[i] for i in split["test_ids"] if i in by_id]
        train_set = [by_id[i] for i in split["train_ids"] if i in by_id]
        if not test_set or not train_set:
            raise DataError("stored split references no annotated posts")
    elif protocol == "future_window":
        start, end = (_parse_date(d, "eval.future_window") for d in cfg.future_window)
        test_set = [a for a in annotated if start <= a.post.created_date() <= end]
        train_set = [by_id[i] for i in split["train_ids"] if i in by_id]
        if not test_set:
            raise DataError("future window contains no annotated posts")
    else:
        raise ConfigError(f"unknown protocol {protocol!r}")

    X_test = features.featurize_posts(bundle, [a.post for a in test_set])
    soa_test, levels_test = evaluation.dataset_targets(test_set)
    soa_train, levels_train = evaluation.dataset_targets(train_set)
    baseline_targets = dict(soa_train)
    baseline_targets["intensity"] = np.asarray(
        [models.combine_intensity_labels(v) for v in levels_train], dtype=np.float64
    )
    report = evaluation.evaluate_ensemble(
        ensemble,
        X_test,
        soa_test,
        levels_test,
        protocol=protocol,
        baseline_targets=baseline_targets,
        baseline_seed=cfg.seed,
    )
    report.cv_reference = {
        k: float(v) for k, v in ensemble.manifest.get("cv_reference", {}).items()
    }
    run_dir = prepare_run_dir(cfg, manifest, args.outdir, args.force)
    _write_eval_outputs(report, run_dir, protocol)
    print(run_dir)
    return EXIT_OK


def _write_eval_outputs(report: evaluation.EvalReport, run_dir: Path, protocol: str) -> None:
    evaluation.write_eval_csv(report, run_dir / f"eval_{protocol}.csv", which="model")
    if report.baseline:
        evaluation.write_eval_csv(
            report, run_dir / f"eval_{protocol}_baseline.csv", which="baseline"
        )
    _write_json(run_dir / f"eval_{protocol}.json", report.to_jsonable())


def _parse_date(value: str, what: str) -> dt.date:
    try:
        return dt.date.fromisoformat(value)
    except ValueError as exc:
        raise ConfigError(f"{what}: {value!r} is not an ISO date") from exc


def cmd_predict(cfg: RunConfig, args) -> int:
    bundle_dir = Path(args.bundle)
    manifest = build_manifest("predict", cfg, _bundle_inputs(cfg, bundle_dir))
    collection = _load_corpus(cfg)
    if not collection.active:
        raise DataError("no active posts to predict")
    bundle, ensemble, _ = _load_bundle(cfg, bundle_dir)
    run_dir = prepare_run_dir(cfg, manifest, args.outdir, args.force)

    posts = collection.active
    vectors = [features.assemble_features(p, bundle) for p in posts]
    X = features.stack_features(vectors)
    scores = {
        name: models.decision_scores(model, X)
        for name, model in ensemble.all_models().items()
    }
    with open(run_dir / "predictions.jsonl", "w", encoding="utf-8") as fh:
        for i, post in enumerate(posts):
            row: dict = {"id": post.id}
            for name in SOA_LABELS:
                row[name] = bool(scores[name][i] > 0) if name in scores else False
            row["intensity"] = (
                bool(scores["intensity"][i] > 0) if "intensity" in scores else None
            )
            row["scores"] = {
                name: round(float(values[i]), 6) for name, values in sorted(scores.items())
            }
            row["readability_missing"] = vectors[i].readability_missing
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _write_json(
        run_dir / "predict_summary.json",
        {"n_posts": len(posts), "skipped_labels": ensemble.skipped},
    )
    print(run_dir)
    return EXIT_OK


def _load_predictions(path: Path) -> dict[str, dict]:
    rows: dict[str, dict] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{line_no}: invalid json: {exc.msg}") from exc
        rows[str(row["id"])] = row
    if not rows:
        raise DataError(f"{path}: no prediction rows")
    return rows


def cmd_trends(cfg: RunConfig, args) -> int:
    predictions_path = Path(args.predictions)
    if not predictions_path.exists():
        raise ConfigError(f"predictions file {predictions_path} does not exist")
    inputs = {
        "corpus": _hash_file(cfg.require_path("corpus")),
        "predictions": _hash_file(predictions_path),
    }
    cases_path = cfg.path("cases")
    if cases_path is not None:
        if not cases_path.exists():
            raise ConfigError(f"paths.cases: {cases_path} does not exist")
        inputs["cases"] = _hash_file(cases_path)
    manifest = build_manifest("trends", cfg, inputs)
    collection = _load_corpus(cfg)
    predictions = _load_predictions(predictions_path)

    monthly = corpus.bucket_by_period(collection.active, "month")
    weekly = corpus.bucket_by_period(collection.active, "week")
    soa_rows = {
        pid: {name: bool(row.get(name)) for name in SOA_LABELS}
        for pid, row in predictions.items()
    }
    intensity_rows = {
        pid: bool(row.get("intensity"))
        for pid, row in predictions.items()
        if row.get("intensity") is not None
    }
    soa_series = analysis.soa_trend(monthly, soa_rows)
    intensity_series = analysis.intensity_trend(weekly, intensity_rows)

    run_dir = prepare_run_dir(cfg, manifest, args.outdir, args.force)
    analysis.write_trend_csv(soa_series, run_dir / "soa_trend_monthly.csv")
    analysis.write_trend_csv(intensity_series, run_dir / "intensity_trend_weekly.csv")
    if cases_path is not None:
        try:
            cases = analysis.load_case_series(cases_path)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        overlay = analysis.overlay_cases(soa_series, cases)
        analysis.write_overlay_csv(overlay, run_dir / "soa_trend_with_cases.csv")
    print(run_dir)
    return EXIT_OK


def cmd_correlate(cfg: RunConfig, args) -> int:
    predictions_path = Path(args.predictions)
    if not predictions_path.exists():
        raise ConfigError(f"predictions file {predictions_path} does not exist")
    manifest = build_manifest(
        "correlate", cfg, {"predictions": _hash_file(predictions_path)}
    )
    predictions = _load_predictions(predictions_path)
    ordered = sorted(predictions)
    columns: dict[str, list[float]] = {
        name: [float(bool(predictions[pid].get(name))) for pid in ordered]
        for name in ("intensity",) + SOA_LABELS
    }
    try:
        matrix = analysis.correlation_matrix(
            columns, method=args.method, seed=cfg.seed
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    run_dir = prepare_run_dir(cfg, manifest, args.outdir, args.force)
    analysis.write_correlation_csv(matrix, run_dir / "correlations.csv")
    print(run_dir)
    return EXIT_OK


def cmd_agreement(cfg: RunConfig, args) -> int:
    ratings_path = Path(args.ratings) if args.ratings else cfg.require_path("ratings")
    if not ratings_path.exists():
        raise ConfigError(f"ratings file {ratings_path} does not exist")
    manifest = build_manifest("agreement", cfg, {"ratings": _hash_file(ratings_path)})
    per_variable = _ratings_matrices(ratings_path)
    summary = evaluation.agreement_summary(per_variable)
    run_dir = prepare_run_dir(cfg, manifest, args.outdir, args.force)
    _write_json(run_dir / "agreement.json", summary)
    with open(run_dir / "agreement.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "alpha"])
        for name in sorted(summary):
            value = summary[name]
            writer.writerow([name, "undefined" if value is None else f"{value:.4f}"])
    print(run_dir)
    return EXIT_OK


def _ratings_matrices(path: Path) -> dict[str, np.ndarray]:
    """Long CSV (item_id, rater_id, variable, value) -> per-variable
    raters x items matrices over complete items."""
    cells: dict[str, dict[str, dict[str, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"item_id", "rater_id", "variable", "value"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns {sorted(required)}")
        for line_no, row in enumerate(reader, start=2):
            try:
                value = float(row["value"])
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: bad value {row['value']!r}") from exc
            cells.setdefault(row["variable"], {}).setdefault(row["item_id"], {})[
                row["rater_id"]
            ] = value
    out: dict[str, np.ndarray] = {}
    for variable, items in cells.items():
        raters = sorted({r for ratings in items.values() for r in ratings})
        complete = [i for i in sorted(items) if set(items[i]) == set(raters)]
        dropped = len(items) - len(complete)
        if dropped:
            log.warning(
                "%s: dropped %d items not rated by all raters", variable, dropped
            )
        if len(raters) < 2 or len(complete) < 2:
            continue
        out[variable] = np.asarray(
            [[items[i][r] for i in complete] for r in raters], dtype=np.float64
        )
    if not out:
        raise DataError(f"{path}: no variable has >= 2 raters and >= 2 complete items")
    return out


def cmd_human_eval_export(cfg: RunConfig, args) -> int:
    inputs = {"corpus": _hash_file(cfg.require_path("corpus"))}
    predictions = None
    if args.predictions:
        predictions_path = Path(args.predictions)
        if not predictions_path.exists():
            raise ConfigError(f"predictions file {predictions_path} does not exist")
        inputs["predictions"] = _hash_file(predictions_path)
        predictions = _load_predictions(predictions_path)
    manifest = build_manifest("human-eval-export", cfg, inputs)
    collection = _load_corpus(cfg)
    start, end = (_parse_date(d, "eval.future_window") for d in cfg.future_window)
    run_dir = prepare_run_dir(cfg, manifest, args.outdir, args.force)
    try:
        summary = evaluation.human_eval_export(
            collection.active,
            (start, end),
            n=cfg.human_eval_n,
            seed=cfg.seed,
            predictions=predictions,
            sheet_path=run_dir / "human_eval_sheet.csv",
            sealed_path=run_dir / "human_eval_predictions.jsonl",
        )
    except evaluation.SplitError as exc:
        raise DataError(str(exc)) from exc
    _write_json(run_dir / "human_eval_summary.json", summary)
    print(run_dir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soanno",
        description="Anxiety-subject annotation pipeline for forum posts",
    )
    parser.add_argument("--version", action="version", version=f"soanno {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--outdir", default=None, help="override paths.outdir")
        p.add_argument("--seed", type=int, default=None, help="override seed")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a dotted config key (repeatable)",
        )
        p.add_argument("--force", action="store_true", help="overwrite an existing run dir")

    p = sub.add_parser("ingest", help="load a corpus and emit stats + skip report")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sample", help="stratified per-month sample")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="fit features and the classifier ensemble")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run an evaluation protocol")
    common(p)
    p.add_argument(
        "--protocol",
        choices=["main_split", "last_month", "future_window"],
        default="main_split",
    )
    p.add_argument("--bundle", default=None, help="train run directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="annotate a corpus with a trained bundle")
    common(p)
    p.add_argument("--bundle", required=True, help="train run directory")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("trends", help="monthly SOA and weekly intensity series")
    common(p)
    p.add_argument("--predictions", required=True, help="predictions.jsonl path")
    p.set_defaults(func=cmd_trends)

    p = sub.add_parser("correlate", help="pairwise label correlations")
    common(p)
    p.add_argument("--predictions", required=True, help="predictions.jsonl path")
    p.add_argument("--method", choices=["t", "permutation"], default="t")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("agreement", help="inter-rater Cronbach alpha")
    common(p)
    p.add_argument("--ratings", default=None, help="long-format ratings CSV")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("human-eval-export", help="blinded annotation sheet")
    common(p)
    p.add_argument("--predictions", default=None, help="predictions.jsonl to seal")
    p.set_defaults(func=cmd_human_eval_export)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = RunConfig.from_file(args.config, overrides)
        return args.func(cfg, args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (DataError, CorpusError, VocabularyError, LdaError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except (DegenerateLabelsError, GridSearchError) as exc:
        log.error("%s", exc)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
