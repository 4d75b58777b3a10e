"""Synthetic corpora with planted structure.

These generators back the experiment scripts and the verification suite:
keyword-marked multi-label corpora with controllable class priors and
marking noise, vocabulary-drift variants, disjoint planted topics, and a
decaying intensity series.
"""

from __future__ import annotations

import datetime as dt
import random
from dataclasses import dataclass

from . import SOA_LABELS
from .corpus import AnnotatedPost, IntensityLevel, Post, SoaLabels

# Positive-class shares mirroring the reported test-set ratios.
PAPER_RATIOS = {
    "finance": 0.13,
    "restrict": 0.23,
    "health": 0.48,
    "guide": 0.21,
    "work": 0.06,
    "mental": 0.22,
    "death": 0.08,
    "travel": 0.06,
    "future": 0.13,
}
INTENSITY_RATIO = 0.36

MARKERS = {
    "finance": ("moneycrunch", "rentbill", "joblosscut"),
    "restrict": ("lockdownrule", "quarantinestay", "curfewnote"),
    "health": ("viruscatch", "infectionfear", "symptomcheck"),
    "guide": ("maskskip", "ruleignore", "crowdparty"),
    "work": ("shiftrisk", "workplacecrowd", "dutyexposure"),
    "mental": ("mindstrain", "moodcrash", "therapytalk"),
    "death": ("fatalworry", "mourningnews", "gravefear"),
    "travel": ("flightworry", "transitride", "borderpass"),
    "future": ("tomorrowdoubt", "horizonfear", "pathunknown"),
    "intensity": ("panicsurge", "dreadspike", "terrorwave"),
}

DRIFTED_GUIDE_MARKERS = ("distancebreak", "gatherflout", "visitorsneak")

_FILLER = (
    "week day family friend house store street neighbor school class online "
    "video call phone news article reading walk park dinner breakfast sleep "
    "morning evening routine plan list note question answer advice thread "
    "post reply update situation moment thing people person group town city "
    "winter spring summer weather rain sunshine garden window room kitchen "
    "table coffee tea water bread fruit music book movie show game puzzle "
    "letter email message photo memory story idea thought feeling opinion "
    "change decision choice chance reason result effect point side part "
    "start end middle step road trip visit stay leave return wait watch "
    "listen talk share learn teach practice habit goal task project detail"
).split()


@dataclass
class SyntheticCorpus:
    posts: list[Post]
    annotations: list[AnnotatedPost]
    marker_sets: dict[str, tuple[str, ...]]


def _month_starts(first: dt.date, count: int) -> list[dt.date]:
    out = [first]
    for _ in range(count - 1):
        prev = out[-1]
        year, month = (prev.year + 1, 1) if prev.month == 12 else (prev.year, prev.month + 1)
        out.append(dt.date(year, month, 1))
    return out


def _timestamp_in_month(rng: random.Random, month_start: dt.date) -> int:
    if month_start.month == 12:
        next_start = dt.date(month_start.year + 1, 1, 1)
    else:
        next_start = dt.date(month_start.year, month_start.month + 1, 1)
    days = (next_start - month_start).days
    day = rng.randrange(days)
    second = rng.randrange(86400)
    moment = dt.datetime.combine(
        month_start + dt.timedelta(days=day), dt.time(), dt.timezone.utc
    ) + dt.timedelta(seconds=second)
    return int(moment.timestamp())


def _compose_text(rng: random.Random, markers: list[str]) -> tuple[str, str]:
    title = " ".join(rng.choice(_FILLER) for _ in range(rng.randint(2, 4)))
    n_words = rng.randint(14, 26)
    words = [rng.choice(_FILLER) for _ in range(n_words)]
    for marker in markers:
        words.insert(rng.randrange(len(words) + 1), marker)
    # sentence structure so readability varies
    chunks = []
    while words:
        take = min(len(words), rng.randint(5, 9))
        chunks.append(" ".join(words[:take]) + ".")
        words = words[take:]
    return title, " ".join(chunks)


def _draw_labels(rng: random.Random, priors: dict[str, float]) -> SoaLabels:
    values = {}
    health_prior = priors.get("health", 0.0)
    values["health"] = rng.random() < health_prior
    work_prior = priors.get("work", 0.0)
    # work implies health; conditioning keeps both marginals at their priors
    values["work"] = (
        values["health"]
        and health_prior > 0
        and rng.random() < work_prior / health_prior
    )
    for name in SOA_LABELS:
        if name in ("health", "work"):
            continue
        values[name] = rng.random() < priors.get(name, 0.0)
    return SoaLabels(**values)


def keyword_planted_corpus(
    n_posts: int,
    seed: int = 0,
    priors: dict[str, float] | None = None,
    intensity_ratio: float = INTENSITY_RATIO,
    noise: float = 0.1,
    months: int = 4,
    first_month: dt.date = dt.date(2020, 3, 1),
    guide_drift_month: str | None = None,
) -> SyntheticCorpus:
    """Multi-label corpus where each label is marked by its keyword set.

    Marking noise is one-sided: with probability `noise` a positive label
    emits no keyword, so the label reads as annotated context the text
    does not support. Setting guide_drift_month (a YYYY-MM string) swaps
    the guide markers for an unseen set from that month on.
    """
    rng = random.Random(seed)
    priors = dict(PAPER_RATIOS if priors is None else priors)
    starts = _month_starts(first_month, months)
    posts: list[Post] = []
    annotations: list[AnnotatedPost] = []
    for i in range(n_posts):
        month_start = starts[i % months]
        month_label = month_start.strftime("%Y-%m")
        soa = _draw_labels(rng, priors)
        level2 = rng.random() < intensity_ratio
        level = 2 if level2 else (0 if rng.random() < 0.15 else 1)
        markers: list[str] = []
        for name in SOA_LABELS:
            if not getattr(soa, name):
                continue
            if rng.random() < noise:
                continue
            marker_set = MARKERS[name]
            if (
                name == "guide"
                and guide_drift_month is not None
                and month_label >= guide_drift_month
            ):
                marker_set = DRIFTED_GUIDE_MARKERS
            markers.extend(rng.sample(marker_set, len(marker_set)))
        if level2 and rng.random() >= noise:
            markers.extend(rng.sample(MARKERS["intensity"], 3))
        title, body = _compose_text(rng, markers)
        post = Post(
            id=f"p{i:06d}",
            author_id=f"u{rng.randrange(max(2, n_posts // 2)):05d}",
            title=title,
            body=body,
            created_utc=_timestamp_in_month(rng, month_start),
        )
        posts.append(post)
        annotations.append(
            AnnotatedPost(post=post, soa=soa, intensity=IntensityLevel(level))
        )
    return SyntheticCorpus(posts=posts, annotations=annotations, marker_sets=dict(MARKERS))


def drift_corpus(
    posts_per_month: int = 300,
    n_months: int = 9,
    cutoff_month: str = "2020-10",
    seed: int = 0,
    noise: float = 0.05,
) -> SyntheticCorpus:
    """Feb-Oct style corpus whose guide vocabulary changes at the cutoff.

    Only the healthier-prior labels are planted so holdout metric noise on
    rare classes does not mask the drift signal.
    """
    priors = {
        "finance": 0.13,
        "restrict": 0.23,
        "health": 0.48,
        "guide": 0.21,
        "mental": 0.22,
    }
    return keyword_planted_corpus(
        n_posts=posts_per_month * n_months,
        seed=seed,
        priors=priors,
        noise=noise,
        months=n_months,
        first_month=dt.date(2020, 2, 1),
        guide_drift_month=cutoff_month,
    )


def planted_topic_corpus(
    n_docs: int = 150,
    n_topics: int = 3,
    words_per_topic: int = 10,
    doc_len: int = 12,
    seed: int = 0,
) -> tuple[list[list[str]], list[int], list[tuple[str, ...]]]:
    """Docs drawn from disjoint per-topic vocabularies.

    Word names interleave across topics (word i belongs to topic i mod
    n_topics) so no lexicographic prefix lines up with one topic.
    """
    rng = random.Random(seed)
    topic_words = [
        tuple(
            f"word{k + j * n_topics:03d}" for j in range(words_per_topic)
        )
        for k in range(n_topics)
    ]
    docs: list[list[str]] = []
    assignments: list[int] = []
    for d in range(n_docs):
        k = d % n_topics
        docs.append([rng.choice(topic_words[k]) for _ in range(doc_len)])
        assignments.append(k)
    return docs, assignments, topic_words


def intensity_decay_series(
    n_weeks: int = 20,
    posts_per_week: int = 60,
    start_rate: float = 0.8,
    end_rate: float = 0.1,
    seed: int = 0,
    first_monday: dt.date = dt.date(2020, 3, 2),
) -> tuple[list[Post], dict[str, bool]]:
    """Posts over consecutive ISO weeks with linearly decaying level-2 rate."""
    rng = random.Random(seed)
    posts: list[Post] = []
    labels: dict[str, bool] = {}
    for week in range(n_weeks):
        rate = start_rate + (end_rate - start_rate) * week / max(n_weeks - 1, 1)
        monday = first_monday + dt.timedelta(weeks=week)
        for j in range(posts_per_week):
            moment = dt.datetime.combine(
                monday + dt.timedelta(days=rng.randrange(7)),
                dt.time(),
                dt.timezone.utc,
            ) + dt.timedelta(seconds=rng.randrange(86400))
            post = Post(
                id=f"w{week:02d}p{j:03d}",
                author_id=f"u{j:03d}",
                title="weekly check in",
                body="just a note about the week.",
                created_utc=int(moment.timestamp()),
            )
            posts.append(post)
            labels[post.id] = rng.random() < rate
    return posts, labels


def write_corpus_jsonl(posts: list[Post], path) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for post in posts:
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


def write_annotations_jsonl(annotations: list[AnnotatedPost], path) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            row = {"id": ann.post.id, "intensity": ann.intensity.level}
            row.update({k: bool(v) for k, v in ann.soa.as_dict().items()})
            fh.write(json.dumps(row, sort_keys=True) + "\n")
