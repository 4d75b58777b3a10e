"""Post ingestion, validation, time bucketing, and stratified sampling."""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import SOA_LABELS

log = logging.getLogger(__name__)

DEFAULT_SCHEMA = {
    "id": "id",
    "author_id": "author",
    "title": "title",
    "body": "selftext",
    "created_utc": "created_utc",
    "status": "status",
}

_URL_RE = re.compile(r"(?:https?://\S+|www\.\S+)", re.IGNORECASE)


class PostStatus(str, Enum):
    ACTIVE = "active"
    DELETED = "deleted"
    REMOVED = "removed"


class CorpusError(Exception):
    """Unrecoverable ingestion problem (unreadable file, bad schema)."""


@dataclass(frozen=True)
class Post:
    id: str
    author_id: str
    title: str
    body: str
    created_utc: int
    status: PostStatus = PostStatus.ACTIVE

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("post id must be non-empty")
        if self.created_utc <= 0:
            raise ValueError(f"post {self.id}: created_utc must be > 0")

    @property
    def text(self) -> str:
        """Title and body joined the way the downstream features see them."""
        return f"{self.title} {self.body}".strip()

    def created_date(self) -> dt.date:
        return dt.datetime.fromtimestamp(self.created_utc, dt.timezone.utc).date()


@dataclass(frozen=True)
class SoaLabels:
    finance: bool = False
    restrict: bool = False
    health: bool = False
    guide: bool = False
    work: bool = False
    mental: bool = False
    death: bool = False
    travel: bool = False
    future: bool = False

    def as_dict(self) -> dict[str, bool]:
        return {name: getattr(self, name) for name in SOA_LABELS}

    @classmethod
    def from_dict(cls, values: Mapping[str, object]) -> "SoaLabels":
        return cls(**{name: bool(values.get(name, False)) for name in SOA_LABELS})


@dataclass(frozen=True)
class IntensityLevel:
    level: int

    def __post_init__(self) -> None:
        if self.level not in (0, 1, 2):
            raise ValueError(f"intensity level must be 0, 1, or 2, got {self.level}")


@dataclass(frozen=True)
class AnnotatedPost:
    post: Post
    soa: SoaLabels
    intensity: IntensityLevel
    rater_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        # Gold-label constraint: work risk implies health risk.
        if self.soa.work and not self.soa.health:
            raise ValueError(
                f"post {self.post.id}: work label set without health label"
            )


@dataclass(frozen=True, order=True)
class PeriodKey:
    granularity: str  # "month" or "week"
    start: dt.date

    def __post_init__(self) -> None:
        if self.granularity not in ("month", "week"):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.granularity == "month" and self.start.day != 1:
            raise ValueError("month key must start on day 1")
        if self.granularity == "week" and self.start.isoweekday() != 1:
            raise ValueError("week key must start on an ISO Monday")

    def label(self) -> str:
        if self.granularity == "month":
            return self.start.strftime("%Y-%m")
        iso = self.start.isocalendar()
        return f"{iso.year}-W{iso.week:02d}"


@dataclass(frozen=True)
class SkipEntry:
    line_no: int
    reason: str


@dataclass
class PostCollection:
    """Result of one ingest run: active posts plus everything set aside."""

    active: list[Post]
    unusable: list[Post] = field(default_factory=list)
    skips: list[SkipEntry] = field(default_factory=list)
    unusable_lines: list[SkipEntry] = field(default_factory=list)
    total_lines: int = 0
    undersized_months: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.active)

    def ids(self) -> list[str]:
        return [p.id for p in self.active]

    def write_skip_report(self, path: str | Path) -> None:
        """CSV of line_no, reason covering skipped and unusable lines."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["line_no", "reason"])
            entries = sorted(self.skips + self.unusable_lines, key=lambda e: e.line_no)
            for entry in entries:
                writer.writerow([entry.line_no, entry.reason])


def is_url_only(title: str, body: str) -> bool:
    """True when title+body contain no content after stripping URLs."""
    stripped = _URL_RE.sub(" ", f"{title} {body}")
    return not stripped.strip()


def month_key(date: dt.date) -> PeriodKey:
    return PeriodKey("month", date.replace(day=1))


def week_key(date: dt.date) -> PeriodKey:
    return PeriodKey("week", date - dt.timedelta(days=date.isoweekday() - 1))


def load_posts(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
) -> PostCollection:
    """Read a JSON Lines post dump.

    Deleted/removed posts and malformed lines go to the skip report; posts
    whose text is empty or URL-only are kept aside as unusable. Every input
    line lands in exactly one of active/unusable/skips.
    """
    schema = dict(DEFAULT_SCHEMA, **(schema or {}))
    path = Path(path)
    try:
        raw_lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    collection = PostCollection(active=[])
    seen_ids: set[str] = set()
    for line_no, line in enumerate(raw_lines, start=1):
        collection.total_lines += 1
        if not line.strip():
            collection.skips.append(SkipEntry(line_no, "blank line"))
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            collection.skips.append(SkipEntry(line_no, f"invalid json: {exc.msg}"))
            continue
        if not isinstance(record, dict):
            collection.skips.append(SkipEntry(line_no, "line is not a json object"))
            continue
        try:
            post = _post_from_record(record, schema)
        except ValueError as exc:
            collection.skips.append(SkipEntry(line_no, str(exc)))
            continue
        if post.id in seen_ids:
            collection.skips.append(SkipEntry(line_no, f"duplicate id {post.id}"))
            continue
        seen_ids.add(post.id)
        if post.status is not PostStatus.ACTIVE:
            collection.skips.append(
                SkipEntry(line_no, f"status {post.status.value}")
            )
            continue
        if is_url_only(post.title, post.body):
            collection.unusable.append(post)
            collection.unusable_lines.append(
                SkipEntry(line_no, "unusable: empty or url-only")
            )
            continue
        collection.active.append(post)
    return collection


def _post_from_record(record: Mapping[str, object], schema: Mapping[str, str]) -> Post:
    def fetch(key: str, default: object = None) -> object:
        return record.get(schema[key], default)

    post_id = fetch("id")
    if post_id is None or str(post_id) == "":
        raise ValueError("missing id")
    created = fetch("created_utc")
    if created is None:
        raise ValueError("missing created_utc")
    try:
        created_int = int(float(created))  # dumps often carry floats
    except (TypeError, ValueError):
        raise ValueError(f"unparsable created_utc {created!r}")
    if created_int <= 0:
        raise ValueError(f"created_utc {created_int} not positive")
    status_raw = fetch("status", PostStatus.ACTIVE.value)
    try:
        status = PostStatus(str(status_raw))
    except ValueError:
        raise ValueError(f"unknown status {status_raw!r}")
    return Post(
        id=str(post_id),
        author_id=str(fetch("author_id", "") or ""),
        title=str(fetch("title", "") or ""),
        body=str(fetch("body", "") or ""),
        created_utc=created_int,
        status=status,
    )


def bucket_by_period(
    posts: Iterable[Post], granularity: str
) -> dict[PeriodKey, list[Post]]:
    """Partition posts into UTC calendar months or ISO weeks."""
    if granularity not in ("month", "week"):
        raise ValueError(f"unknown granularity {granularity!r}")
    keyfn = month_key if granularity == "month" else week_key
    buckets: dict[PeriodKey, list[Post]] = {}
    for post in posts:
        buckets.setdefault(keyfn(post.created_date()), []).append(post)
    return dict(sorted(buckets.items(), key=lambda kv: kv[0].start))


def stratified_sample(
    collection: PostCollection,
    per_month: int,
    seed: int,
    merge_months: Sequence[Sequence[str]] = (),
) -> PostCollection:
    """Draw per_month posts uniformly without replacement from each month.

    Months listed together in merge_months are pooled before sampling.
    Months (or pools) with fewer than per_month posts contribute everything
    and are flagged in undersized_months.
    """
    if per_month < 1:
        raise ValueError("per_month must be >= 1")
    if not collection.active:
        log.warning("stratified_sample called on an empty collection")
        return PostCollection(active=[], total_lines=0)

    buckets = bucket_by_period(collection.active, "month")
    groups: dict[str, list[Post]] = {key.label(): posts for key, posts in buckets.items()}
    for pool in merge_months:
        pooled: list[Post] = []
        for label in pool:
            pooled.extend(groups.pop(label, []))
        if pooled:
            groups["+".join(sorted(pool))] = pooled

    rng = random.Random(seed)
    sampled: list[Post] = []
    undersized: list[str] = []
    for label in sorted(groups):
        posts = sorted(groups[label], key=lambda p: p.id)
        if len(posts) <= per_month:
            if len(posts) < per_month:
                undersized.append(label)
            sampled.extend(posts)
        else:
            sampled.extend(rng.sample(posts, per_month))
    sampled.sort(key=lambda p: (p.created_utc, p.id))
    return PostCollection(
        active=sampled,
        total_lines=len(sampled),
        undersized_months=undersized,
    )


def load_annotations(
    path: str | Path, posts: Mapping[str, Post]
) -> list[AnnotatedPost]:
    """Read a JSONL annotation file and join it onto loaded posts by id.

    Each line carries `id`, the nine boolean labels, and `intensity` (0/1/2).
    Unknown ids and invalid rows are fatal: silent label loss would corrupt
    every downstream protocol.
    """
    path = Path(path)
    annotated: list[AnnotatedPost] = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{line_no}: invalid json: {exc.msg}") from exc
        post_id = str(record.get("id", ""))
        if post_id not in posts:
            raise CorpusError(f"{path}:{line_no}: unknown post id {post_id!r}")
        if "intensity" not in record:
            raise CorpusError(f"{path}:{line_no}: missing intensity")
        annotated.append(
            AnnotatedPost(
                post=posts[post_id],
                soa=SoaLabels.from_dict(record),
                intensity=IntensityLevel(int(record["intensity"])),
                rater_ids=tuple(record.get("rater_ids", ())),
            )
        )
    return annotated
