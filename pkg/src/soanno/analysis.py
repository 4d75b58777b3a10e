"""Trend aggregation, Pearson correlations with Holm correction, and
coefficient-based feature importance."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as scipy_stats

from . import SOA_LABELS
from .corpus import PeriodKey, Post
from .models import LinearModel

log = logging.getLogger(__name__)


class UndefinedCorrelationError(ValueError):
    """A correlation over a zero-variance vector has no value."""


# ---------------------------------------------------------------------------
# trends


@dataclass(frozen=True)
class TrendSeries:
    period: PeriodKey
    values: dict[str, float]
    n_posts: int


def soa_trend(
    buckets: Mapping[PeriodKey, Sequence[Post]],
    predictions: Mapping[str, Mapping[str, bool]],
) -> list[TrendSeries]:
    """Per period, the fraction of posts predicted positive for each SOA.

    predictions maps post id -> {label: bool}. Posts without predictions
    are skipped with a warning; periods appear in chronological order
    (empty periods never materialize as bucket keys).
    """
    out: list[TrendSeries] = []
    missing = 0
    for period in sorted(buckets, key=lambda p: p.start):
        posts = buckets[period]
        rows = [predictions[p.id] for p in posts if p.id in predictions]
        missing += len(posts) - len(rows)
        if not rows:
            continue
        values = {
            name: sum(1 for r in rows if r.get(name)) / len(rows)
            for name in SOA_LABELS
        }
        out.append(TrendSeries(period=period, values=values, n_posts=len(rows)))
    if missing:
        log.warning("%d posts had no predictions and were skipped", missing)
    return out


def intensity_trend(
    buckets: Mapping[PeriodKey, Sequence[Post]],
    predictions: Mapping[str, bool],
) -> list[TrendSeries]:
    """Per period (typically ISO weeks), the mean predicted intensity."""
    out: list[TrendSeries] = []
    for period in sorted(buckets, key=lambda p: p.start):
        posts = buckets[period]
        rows = [bool(predictions[p.id]) for p in posts if p.id in predictions]
        if not rows:
            continue
        out.append(
            TrendSeries(
                period=period,
                values={"intensity": sum(rows) / len(rows)},
                n_posts=len(rows),
            )
        )
    return out


def load_case_series(path: str | Path) -> dict[dt.date, float]:
    """CSV of date,cases; dates ISO formatted, counts non-negative."""
    series: dict[dt.date, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"date", "cases"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns date,cases")
        for line_no, row in enumerate(reader, start=2):
            try:
                day = dt.date.fromisoformat(row["date"].strip())
                cases = float(row["cases"])
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from exc
            if cases < 0:
                raise ValueError(f"{path}:{line_no}: negative case count")
            series[day] = series.get(day, 0.0) + cases
    return series


def overlay_cases(
    trends: Sequence[TrendSeries], cases: Mapping[dt.date, float]
) -> list[dict]:
    """Left-join case counts onto trend periods, max-normalized for
    co-plotting. Periods without case data keep an empty cell."""
    def period_total(period: PeriodKey) -> float | None:
        if period.granularity == "month":
            in_period = [
                c for d, c in cases.items()
                if d.year == period.start.year and d.month == period.start.month
            ]
        else:
            end = period.start + dt.timedelta(days=7)
            in_period = [c for d, c in cases.items() if period.start <= d < end]
        return sum(in_period) if in_period else None

    totals = {t.period: period_total(t.period) for t in trends}
    defined = [v for v in totals.values() if v is not None]
    peak = max(defined) if defined else 0.0
    rows = []
    for trend in trends:
        raw = totals[trend.period]
        rows.append(
            {
                "period": trend.period.label(),
                "values": dict(trend.values),
                "n_posts": trend.n_posts,
                "cases_raw": raw,
                "cases_scaled": (raw / peak) if raw is not None and peak > 0 else None,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# correlations


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation; binary 0/1 vectors are fine."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("vectors must have equal length")
    if x.shape[0] < 3:
        raise ValueError("need at least 3 observations")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero variance input")
    r = float(xc @ yc) / (sx * sy)
    return max(-1.0, min(1.0, r))


def pearson_pvalue(r: float, n: int) -> float:
    """Two-sided p from the t transform t = r * sqrt((n-2)/(1-r^2))."""
    if n < 3:
        raise ValueError("need n >= 3")
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * scipy_stats.t.sf(abs(t), df=n - 2))


def permutation_pvalue(
    x: Sequence[float],
    y: Sequence[float],
    n_shuffles: int = 10_000,
    seed: int = 0,
    alternative: str = "two-sided",
) -> float:
    """Permutation p-value for the correlation of x and y (seeded)."""
    observed = pearson(x, y)
    rng = np.random.default_rng(seed)
    y_arr = np.asarray(y, dtype=np.float64)
    hits = 0
    for _ in range(n_shuffles):
        r = pearson(x, rng.permutation(y_arr))
        if alternative == "two-sided":
            hits += abs(r) >= abs(observed) - 1e-12
        elif alternative == "less":
            hits += r <= observed + 1e-12
        elif alternative == "greater":
            hits += r >= observed - 1e-12
        else:
            raise ValueError(f"unknown alternative {alternative!r}")
    return (1 + hits) / (1 + n_shuffles)


def holm_correct(p_values: Sequence[float]) -> list[float]:
    """Step-down Holm adjustment, result in the input order."""
    p = list(p_values)
    if any(not 0.0 <= v <= 1.0 for v in p):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[idx]))
        adjusted[idx] = running
    return adjusted


@dataclass(frozen=True)
class CorrelationCell:
    var_a: str
    var_b: str
    r: float | None
    p_raw: float | None
    p_holm: float | None
    undefined: bool = False


@dataclass
class CorrelationMatrix:
    variables: tuple[str, ...]
    cells: list[CorrelationCell]
    n: int
    method: str

    def cell(self, a: str, b: str) -> CorrelationCell:
        for cell in self.cells:
            if {cell.var_a, cell.var_b} == {a, b}:
                return cell
        raise KeyError((a, b))


def correlation_matrix(
    columns: Mapping[str, Sequence[float]],
    method: str = "t",
    n_shuffles: int = 10_000,
    seed: int = 0,
) -> CorrelationMatrix:
    """All pairwise correlations with jointly Holm-corrected p-values.

    Constant columns yield undefined cells which stay out of the
    correction family. method is "t" for the t-approximation or
    "permutation" for seeded shuffles.
    """
    names = tuple(columns)
    arrays = {k: np.asarray(columns[k], dtype=np.float64) for k in names}
    lengths = {a.shape[0] for a in arrays.values()}
    if len(lengths) != 1:
        raise ValueError("all columns must have equal length")
    n = lengths.pop()
    if n < 3:
        raise ValueError("need at least 3 rows")
    cells: list[CorrelationCell] = []
    defined_idx: list[int] = []
    raw_ps: list[float] = []
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            try:
                r = pearson(arrays[a], arrays[b])
            except UndefinedCorrelationError:
                cells.append(CorrelationCell(a, b, None, None, None, undefined=True))
                continue
            if method == "permutation":
                p_raw = permutation_pvalue(
                    arrays[a], arrays[b], n_shuffles=n_shuffles, seed=seed
                )
            else:
                p_raw = pearson_pvalue(r, n)
            defined_idx.append(len(cells))
            raw_ps.append(p_raw)
            cells.append(CorrelationCell(a, b, r, p_raw, None))
    adjusted = holm_correct(raw_ps)
    for slot, p_holm in zip(defined_idx, adjusted):
        cell = cells[slot]
        cells[slot] = CorrelationCell(
            cell.var_a, cell.var_b, cell.r, cell.p_raw, p_holm
        )
    return CorrelationMatrix(variables=names, cells=cells, n=n, method=method)


def significance_stars(p: float | None) -> str:
    """Table-note convention: middle dot for p<.05, * for p<.01, ** for p<.001."""
    if p is None:
        return "undefined"
    if p < 0.001:
        return "**"
    if p < 0.01:
        return "*"
    if p < 0.05:
        return "·"
    return ""


# ---------------------------------------------------------------------------
# feature importance


def top_features(
    model: LinearModel, feature_names: Sequence[str], n: int = 10
) -> list[tuple[str, float]]:
    """Features ranked by descending signed coefficient."""
    if len(feature_names) != model.dim:
        raise ValueError(
            f"{len(feature_names)} names for a model of dim {model.dim}"
        )
    if n > model.dim:
        log.warning("requested top %d of %d features; returning all", n, model.dim)
        n = model.dim
    if n <= 0:
        return []
    order = np.argsort(-model.weights, kind="stable")
    return [(feature_names[i], float(model.weights[i])) for i in order[:n]]


# ---------------------------------------------------------------------------
# csv writers


def write_trend_csv(trends: Sequence[TrendSeries], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "series", "value", "n_posts"])
        for trend in trends:
            for series in sorted(trend.values):
                writer.writerow(
                    [
                        trend.period.label(),
                        series,
                        f"{trend.values[series]:.6f}",
                        trend.n_posts,
                    ]
                )


def write_overlay_csv(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "series", "value", "n_posts", "cases_raw", "cases_scaled"])
        for row in rows:
            for series in sorted(row["values"]):
                writer.writerow(
                    [
                        row["period"],
                        series,
                        f"{row['values'][series]:.6f}",
                        row["n_posts"],
                        "" if row["cases_raw"] is None else f"{row['cases_raw']:.0f}",
                        "" if row["cases_scaled"] is None else f"{row['cases_scaled']:.6f}",
                    ]
                )


def write_correlation_csv(matrix: CorrelationMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["var_a", "var_b", "r", "p_raw", "p_holm", "significance", "n"])
        for cell in matrix.cells:
            writer.writerow(
                [
                    cell.var_a,
                    cell.var_b,
                    "" if cell.r is None else f"{cell.r:.6f}",
                    "" if cell.p_raw is None else f"{cell.p_raw:.6g}",
                    "" if cell.p_holm is None else f"{cell.p_holm:.6g}",
                    significance_stars(cell.p_holm),
                    matrix.n,
                ]
            )


def write_feature_importance_csv(
    rankings: Mapping[str, Sequence[tuple[str, float]]], path: str | Path
) -> None:
    """Per-classifier ranked features, one row per (classifier, rank)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["classifier", "rank", "feature", "coefficient"])
        for name in rankings:
            for rank, (feature, coef) in enumerate(rankings[name], start=1):
                writer.writerow([name, rank, feature, f"{coef:.6f}"])
