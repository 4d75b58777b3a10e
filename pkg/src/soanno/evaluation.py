"""Splits, cross-validation, grid search, metrics, chronological
validation protocols, and inter-rater agreement."""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import SOA_LABELS
from .corpus import AnnotatedPost, Post, month_key
from .models import (
    DegenerateLabelsError,
    EnsembleModel,
    LinearModel,
    TrainConfig,
    combine_intensity_labels,
    predict_matrix,
    train_dummy,
    train_linear,
)

log = logging.getLogger(__name__)


class SplitError(ValueError):
    pass


class GridSearchError(RuntimeError):
    pass


class AgreementUndefinedError(ValueError):
    """Cronbach's alpha is undefined when items have zero total variance."""


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def positive_ratio(self) -> float:
        return self.support / self.total if self.total else 0.0


def prf(y_true: Sequence, y_pred: Sequence) -> ClassMetrics:
    """Positive-class precision/recall/F1 with the zero-division-is-0 rule."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    if y_true.shape != y_pred.shape:
        raise ValueError(
            f"length mismatch: {y_true.shape[0]} true vs {y_pred.shape[0]} predicted"
        )
    if y_true.shape[0] == 0:
        raise ValueError("cannot score empty label vectors")
    tp = int(np.sum(y_true & y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    tn = int(np.sum(~y_true & ~y_pred))
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return ClassMetrics(precision, recall, f1, tp, fp, fn, tn)


def macro_f1_binary(y_true: Sequence, y_pred: Sequence) -> float:
    """Mean of positive- and negative-class F1 (Table-style intensity metric)."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    return (prf(y_true, y_pred).f1 + prf(~y_true, ~y_pred).f1) / 2.0


def macro_average(per_label: Mapping[str, ClassMetrics]) -> dict[str, float]:
    """Unweighted means over the labels present (skipped labels excluded)."""
    if not per_label:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    return {
        "precision": float(np.mean([m.precision for m in per_label.values()])),
        "recall": float(np.mean([m.recall for m in per_label.values()])),
        "f1": float(np.mean([m.f1 for m in per_label.values()])),
    }


@dataclass
class EvalReport:
    protocol: str
    per_label: dict[str, ClassMetrics]
    macro: dict[str, float]
    baseline: dict[str, ClassMetrics] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)
    cv_reference: dict[str, float] = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        def metrics_dict(m: ClassMetrics) -> dict:
            return {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "tp": m.tp,
                "fp": m.fp,
                "fn": m.fn,
                "tn": m.tn,
            }

        return {
            "protocol": self.protocol,
            "per_label": {k: metrics_dict(v) for k, v in self.per_label.items()},
            "macro": self.macro,
            "baseline": {k: metrics_dict(v) for k, v in self.baseline.items()},
            "skipped": self.skipped,
            "cv_reference": self.cv_reference,
            "manifest": self.manifest,
        }


def write_eval_csv(
    report: EvalReport, path: str | Path, which: str = "model"
) -> None:
    """Table-style CSV: variable, P, R, F1, ratio."""
    source = report.per_label if which == "model" else report.baseline
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variable", "P", "R", "F1", "ratio"])
        for name in ["intensity"] + list(SOA_LABELS):
            metrics = source.get(name)
            if metrics is None:
                continue
            writer.writerow(
                [
                    name,
                    f"{metrics.precision:.4f}",
                    f"{metrics.recall:.4f}",
                    f"{metrics.f1:.4f}",
                    f"{metrics.positive_ratio:.4f}",
                ]
            )


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitPlan:
    train_ids: tuple
    test_ids: tuple
    seed: int
    strata_name: str = ""
    flagged_strata: tuple = ()

    def __post_init__(self) -> None:
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise SplitError(f"train/test overlap on {len(overlap)} ids")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(
    ids: Sequence,
    strata: Sequence,
    test_frac: float = 0.2,
    seed: int = 0,
    strata_name: str = "",
) -> SplitPlan:
    """Stratified train/test partition.

    Per-stratum test counts start from the exact quota (stratum_size *
    test_frac) and the largest-remainder rule corrects them so the total
    test size equals round(n * test_frac). Singleton strata go to the
    train side with a warning; every stratum keeps at least one train item.
    """
    if not 0.0 < test_frac < 1.0:
        raise SplitError("test_frac must be in (0, 1)")
    if len(ids) != len(strata):
        raise SplitError("ids and strata lengths differ")
    n = len(ids)
    if n == 0:
        raise SplitError("empty dataset")
    target = _round_half_up(n * test_frac)

    groups: dict[object, list] = {}
    for item, key in zip(ids, strata):
        groups.setdefault(key, []).append(item)
    rng = random.Random(seed)
    singles = [k for k in groups if len(groups[k]) == 1]
    if singles:
        log.warning("%d singleton strata placed entirely in train", len(singles))
    eligible = sorted((k for k in groups if len(groups[k]) > 1), key=repr)

    quotas = {k: len(groups[k]) * test_frac for k in eligible}
    counts = {k: int(np.floor(quotas[k])) for k in eligible}
    # every stratum keeps >= 1 training item
    for k in eligible:
        counts[k] = min(counts[k], len(groups[k]) - 1)
    deficit = target - sum(counts.values())
    by_remainder = sorted(
        eligible, key=lambda k: (-(quotas[k] - np.floor(quotas[k])), repr(k))
    )
    while deficit > 0 and by_remainder:
        progressed = False
        for k in by_remainder:
            if deficit == 0:
                break
            if counts[k] < len(groups[k]) - 1:
                counts[k] += 1
                deficit -= 1
                progressed = True
        if not progressed:
            break
    if deficit > 0:
        log.warning("stratified split could not reach target test size")

    train: list = []
    test: list = []
    for k in sorted(groups, key=repr):
        members = sorted(groups[k], key=repr)
        rng.shuffle(members)
        take = counts.get(k, 0)
        test.extend(members[:take])
        train.extend(members[take:])
    return SplitPlan(
        train_ids=tuple(train),
        test_ids=tuple(test),
        seed=seed,
        strata_name=strata_name,
        flagged_strata=tuple(repr(k) for k in singles),
    )


def stratified_kfold(
    ids: Sequence,
    strata: Sequence,
    k: int = 5,
    seed: int = 0,
    strata_name: str = "",
) -> list[SplitPlan]:
    """k disjoint covering folds; per-stratum counts differ by <= 1."""
    if k < 2:
        raise SplitError("k must be >= 2")
    n = len(ids)
    if k > n:
        raise SplitError(f"k={k} exceeds dataset size {n}")
    if len(strata) != n:
        raise SplitError("ids and strata lengths differ")
    groups: dict[object, list] = {}
    for item, key in zip(ids, strata):
        groups.setdefault(key, []).append(item)
    flagged = tuple(repr(key) for key in groups if len(groups[key]) < k)
    rng = random.Random(seed)
    folds: list[list] = [[] for _ in range(k)]
    for g_index, key in enumerate(sorted(groups, key=repr)):
        members = sorted(groups[key], key=repr)
        rng.shuffle(members)
        for j, item in enumerate(members):
            folds[(j + g_index) % k].append(item)
    plans = []
    for j in range(k):
        test = folds[j]
        train = [item for jj in range(k) if jj != j for item in folds[jj]]
        plans.append(
            SplitPlan(
                train_ids=tuple(train),
                test_ids=tuple(test),
                seed=seed,
                strata_name=strata_name,
                flagged_strata=flagged,
            )
        )
    return plans


# ---------------------------------------------------------------------------
# grid search


def grid_search(
    X: sp.csr_matrix,
    y: np.ndarray,
    grid: Sequence[TrainConfig],
    k: int = 5,
    seed: int = 0,
    metric: Callable[[np.ndarray, np.ndarray], float] | None = None,
) -> tuple[TrainConfig, list[dict]]:
    """Pick the grid point with the best mean CV metric (default: F1 of the
    positive class). Ties keep the lexicographically first grid point."""
    if len(grid) == 0:
        raise GridSearchError("empty hyperparameter grid")
    metric = metric or (lambda yt, yp: prf(yt, yp).f1)
    y = np.asarray(y).astype(np.float64)
    indices = np.arange(X.shape[0])
    plans = stratified_kfold(indices, y > 0.5, k=k, seed=seed)
    best: tuple[float, TrainConfig] | None = None
    table: list[dict] = []
    for config in sorted(grid, key=lambda c: c.sort_key()):
        scores: list[float] = []
        error: str | None = None
        for plan in plans:
            tr = np.asarray(plan.train_ids, dtype=int)
            te = np.asarray(plan.test_ids, dtype=int)
            try:
                model = train_linear(X[tr], y[tr], config)
            except DegenerateLabelsError as exc:
                error = str(exc)
                break
            scores.append(metric(y[te] > 0.5, predict_matrix(model, X[te])))
        if error is not None:
            table.append({"config": config.to_dict(), "error": error})
            continue
        mean_score = float(np.mean(scores))
        table.append(
            {"config": config.to_dict(), "fold_scores": scores, "mean": mean_score}
        )
        if best is None or mean_score > best[0]:
            best = (mean_score, config)
    if best is None:
        raise GridSearchError("every grid point failed training")
    return best[1], table


DEFAULT_GRID = tuple(
    TrainConfig(loss="hinge", lam=lam, epochs=epochs)
    for lam in (1e-4, 1e-3, 1e-2, 1e-1)
    for epochs in (5, 20, 50)
)


# ---------------------------------------------------------------------------
# ensemble training / evaluation on feature matrices


def dataset_targets(
    annotated: Sequence[AnnotatedPost],
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Per-SOA binary targets plus raw intensity levels, row-aligned."""
    soa = {
        name: np.asarray([getattr(a.soa, name) for a in annotated], dtype=np.float64)
        for name in SOA_LABELS
    }
    levels = np.asarray([a.intensity.level for a in annotated], dtype=np.int64)
    return soa, levels


def train_ensemble_with_grid(
    X: sp.csr_matrix,
    soa_targets: Mapping[str, np.ndarray],
    intensity_levels: np.ndarray,
    grid: Sequence[TrainConfig],
    k: int = 5,
    seed: int = 0,
) -> tuple[EnsembleModel, dict[str, list[dict]], dict[str, float]]:
    """Grid-search every label independently, then train the final models.

    Returns the ensemble, per-label CV tables, and the chosen configs'
    mean CV scores (the in-period reference used by drift protocols).
    """
    intensity_binary = np.asarray(
        [combine_intensity_labels(v) for v in intensity_levels], dtype=np.float64
    )
    tables: dict[str, list[dict]] = {}
    cv_reference: dict[str, float] = {}
    soa_models: dict[str, LinearModel] = {}
    skipped: dict[str, str] = {}
    seeds: dict[str, int] = {}

    jobs: list[tuple[str, np.ndarray]] = [
        (name, np.asarray(soa_targets[name], dtype=np.float64))
        for name in SOA_LABELS
        if name in soa_targets
    ]
    for name in SOA_LABELS:
        if name not in soa_targets:
            skipped[name] = "no targets provided"
    jobs.append(("intensity", intensity_binary))

    intensity_model: LinearModel | None = None
    for offset, (name, y) in enumerate(jobs):
        positives = int(np.sum(y > 0.5))
        if positives < 2 or positives == y.shape[0]:
            skipped[name] = f"{positives}/{y.shape[0]} positives"
            continue
        metric = macro_f1_binary if name == "intensity" else None
        try:
            best, table = grid_search(X, y, grid, k=k, seed=seed, metric=metric)
        except GridSearchError as exc:
            skipped[name] = str(exc)
            continue
        tables[name] = table
        chosen = [row for row in table if row["config"] == best.to_dict()][0]
        cv_reference[name] = chosen["mean"]
        final_cfg = replace(best, seed=seed + offset)
        model = train_linear(X, y, final_cfg, label_name=name)
        seeds[name] = final_cfg.seed
        if name == "intensity":
            intensity_model = model
        else:
            soa_models[name] = model

    ensemble = EnsembleModel(
        soa_models=soa_models,
        intensity_model=intensity_model,
        skipped=skipped,
        manifest={
            "seeds": seeds,
            "configs": {
                name: model.config.to_dict()
                for name, model in (
                    {**soa_models}
                    | ({"intensity": intensity_model} if intensity_model else {})
                ).items()
            },
            "cv_reference": cv_reference,
            "n_examples": int(X.shape[0]),
            "dim": int(X.shape[1]),
        },
    )
    return ensemble, tables, cv_reference


def evaluate_ensemble(
    ensemble: EnsembleModel,
    X_test: sp.csr_matrix,
    soa_targets: Mapping[str, np.ndarray],
    intensity_levels: np.ndarray,
    protocol: str,
    baseline_targets: Mapping[str, np.ndarray] | None = None,
    baseline_seed: int = 0,
) -> EvalReport:
    """Score every trained model on a held-out matrix.

    baseline_targets are the *training* targets the stratified dummy draws
    its prior from; omit them to skip the baseline block.
    """
    per_label: dict[str, ClassMetrics] = {}
    baseline: dict[str, ClassMetrics] = {}
    intensity_binary = np.asarray(
        [combine_intensity_labels(v) for v in intensity_levels], dtype=np.float64
    )
    truth: dict[str, np.ndarray] = {
        name: np.asarray(soa_targets[name]) > 0.5
        for name in SOA_LABELS
        if name in soa_targets
    }
    truth["intensity"] = intensity_binary > 0.5

    for name, model in ensemble.all_models().items():
        if name not in truth:
            continue
        predictions = predict_matrix(model, X_test)
        per_label[name] = prf(truth[name], predictions)
        if baseline_targets is not None and name in baseline_targets:
            dummy = train_dummy(np.asarray(baseline_targets[name]), seed=baseline_seed)
            baseline[name] = prf(truth[name], dummy.predict(X_test.shape[0]))
    return EvalReport(
        protocol=protocol,
        per_label=per_label,
        macro=macro_average(per_label),
        baseline=baseline,
        skipped=dict(ensemble.skipped),
        manifest={"n_test": int(X_test.shape[0])},
    )


# ---------------------------------------------------------------------------
# chronological protocols


def last_month_holdout(
    annotated: Sequence[AnnotatedPost],
    cutoff_month: str,
    build_features: Callable[[Sequence[Post]], "object"],
    featurize: Callable[[object, Sequence[Post]], sp.csr_matrix],
    grid: Sequence[TrainConfig] = DEFAULT_GRID,
    k: int = 5,
    seed: int = 0,
) -> EvalReport:
    """Train on all months strictly before cutoff_month; test on it.

    build_features fits the feature pipeline on training posts only and
    featurize applies it, so the holdout month never leaks into the
    vocabulary, topic model, or readability standardizer. The report's
    cv_reference carries the in-period CV score of each chosen config.
    """
    monthed = [(month_key(a.post.created_date()).label(), a) for a in annotated]
    months = sorted({m for m, _ in monthed})
    if len(months) < 2:
        raise SplitError("dataset must span at least two months")
    train_set = [a for m, a in monthed if m < cutoff_month]
    test_set = [a for m, a in monthed if m == cutoff_month]
    if not test_set:
        raise SplitError(f"cutoff month {cutoff_month} has no posts")
    if not train_set:
        raise SplitError(f"no training months before {cutoff_month}")

    bundle = build_features([a.post for a in train_set])
    X_train = featurize(bundle, [a.post for a in train_set])
    X_test = featurize(bundle, [a.post for a in test_set])
    soa_train, levels_train = dataset_targets(train_set)
    soa_test, levels_test = dataset_targets(test_set)

    ensemble, _, cv_reference = train_ensemble_with_grid(
        X_train, soa_train, levels_train, grid, k=k, seed=seed
    )
    baseline_targets = dict(soa_train)
    baseline_targets["intensity"] = np.asarray(
        [combine_intensity_labels(v) for v in levels_train], dtype=np.float64
    )
    report = evaluate_ensemble(
        ensemble,
        X_test,
        soa_test,
        levels_test,
        protocol="last_month_holdout",
        baseline_targets=baseline_targets,
        baseline_seed=seed,
    )
    report.cv_reference = cv_reference
    report.manifest.update(
        {
            "cutoff_month": cutoff_month,
            "train_months": [m for m in months if m < cutoff_month],
            "n_train": len(train_set),
        }
    )
    return report


def human_eval_export(
    posts: Sequence[Post],
    window: tuple[dt.date, dt.date],
    n: int = 50,
    seed: int = 0,
    predictions: Mapping[str, Mapping] | None = None,
    sheet_path: str | Path = "human_eval_sheet.csv",
    sealed_path: str | Path = "human_eval_predictions.jsonl",
) -> dict:
    """Blinded annotation sheet plus a sealed prediction file.

    The sheet holds ids, text, and empty label columns; model predictions
    go to a separate file so raters never see them.
    """
    start, end = window
    in_window = [p for p in posts if start <= p.created_date() <= end]
    if not in_window:
        raise SplitError("no posts in the requested window")
    undersized = len(in_window) < n
    if undersized:
        sample = sorted(in_window, key=lambda p: p.id)
        log.warning("window holds %d posts, requested %d", len(in_window), n)
    else:
        rng = random.Random(seed)
        sample = rng.sample(sorted(in_window, key=lambda p: p.id), n)
    sample.sort(key=lambda p: (p.created_utc, p.id))

    with open(sheet_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "title", "body"] + list(SOA_LABELS) + ["intensity"])
        for post in sample:
            writer.writerow([post.id, post.title, post.body] + [""] * 10)
    with open(sealed_path, "w", encoding="utf-8") as fh:
        for post in sample:
            row = {"id": post.id}
            if predictions is not None and post.id in predictions:
                row.update(predictions[post.id])
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return {
        "n_rows": len(sample),
        "undersized": undersized,
        "ids": [p.id for p in sample],
    }


# ---------------------------------------------------------------------------
# agreement


def cronbach_alpha(ratings: np.ndarray) -> float:
    """Cronbach's alpha over a raters-by-items matrix.

    alpha = k/(k-1) * (1 - sum_i var(rater_i) / var(item totals)) with
    sample (n-1) variances. Zero total variance raises
    AgreementUndefinedError.
    """
    ratings = np.asarray(ratings, dtype=np.float64)
    if ratings.ndim != 2:
        raise ValueError("ratings must be a raters x items matrix")
    k, n_items = ratings.shape
    if k < 2 or n_items < 2:
        raise ValueError("need at least 2 raters and 2 items")
    rater_vars = ratings.var(axis=1, ddof=1)
    total_var = ratings.sum(axis=0).var(ddof=1)
    if total_var == 0.0:
        raise AgreementUndefinedError("zero variance in item totals")
    return float(k / (k - 1) * (1.0 - rater_vars.sum() / total_var))


def agreement_summary(
    per_variable: Mapping[str, np.ndarray],
) -> dict[str, float | None]:
    """Alpha per variable plus the mean over defined values.

    Variables whose alpha is undefined map to None and stay out of the
    mean.
    """
    out: dict[str, float | None] = {}
    defined: list[float] = []
    for name, matrix in per_variable.items():
        try:
            alpha = cronbach_alpha(matrix)
        except AgreementUndefinedError:
            out[name] = None
            continue
        out[name] = alpha
        defined.append(alpha)
    out["mean"] = float(np.mean(defined)) if defined else None
    return out
