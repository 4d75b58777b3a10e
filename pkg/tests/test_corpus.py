import datetime as dt
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soanno.corpus import (
    AnnotatedPost,
    CorpusError,
    IntensityLevel,
    PeriodKey,
    Post,
    SoaLabels,
    bucket_by_period,
    is_url_only,
    load_posts,
    month_key,
    stratified_sample,
    week_key,
)
from tests.conftest import make_post


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write((rec if isinstance(rec, str) else json.dumps(rec)) + "\n")


def record(id="p1", **kw):
    base = {
        "id": id,
        "author": "u1",
        "title": "a title",
        "selftext": "body words here.",
        "created_utc": 1584000000,
        "status": "active",
    }
    base.update(kw)
    return base


class TestLoadPosts:
    def test_two_wellformed_posts(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        write_jsonl(path, [record("a"), record("b")])
        coll = load_posts(path)
        assert len(coll.active) == 2
        assert coll.skips == []
        assert coll.unusable == []

    def test_removed_and_deleted_are_skipped(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        write_jsonl(
            path,
            [record("a"), record("b", status="removed"), record("c", status="deleted")],
        )
        coll = load_posts(path)
        assert [p.id for p in coll.active] == ["a"]
        assert len(coll.skips) == 2
        reasons = {e.reason for e in coll.skips}
        assert reasons == {"status removed", "status deleted"}

    def test_url_only_post_is_unusable(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        write_jsonl(
            path, [record("a", title="", selftext="https://example.com/x?y=1")]
        )
        coll = load_posts(path)
        assert coll.active == []
        assert [p.id for p in coll.unusable] == ["a"]

    def test_malformed_line_recorded_with_line_number(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        write_jsonl(path, [record("a"), "{not json", record("b")])
        coll = load_posts(path)
        assert len(coll.active) == 2
        assert len(coll.skips) == 1
        assert coll.skips[0].line_no == 2
        assert "invalid json" in coll.skips[0].reason

    def test_duplicate_id_skipped_not_silently_dropped(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        write_jsonl(path, [record("a"), record("a")])
        coll = load_posts(path)
        assert len(coll.active) == 1
        assert "duplicate id a" in coll.skips[0].reason

    def test_bad_created_and_status_are_skips(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        write_jsonl(
            path,
            [record("a", created_utc=-5), record("b", status="odd"), record("c")],
        )
        coll = load_posts(path)
        assert [p.id for p in coll.active] == ["c"]
        assert len(coll.skips) == 2

    def test_unreadable_file_is_fatal(self, tmp_path):
        with pytest.raises(CorpusError):
            load_posts(tmp_path / "missing.jsonl")

    def test_partition_property(self, tmp_path):
        lines = [
            record("a"),
            "garbage",
            record("b", status="removed"),
            record("c", title="", selftext="www.example.com"),
            "",
            record("d"),
        ]
        path = tmp_path / "posts.jsonl"
        write_jsonl(path, lines)
        coll = load_posts(path)
        assert (
            len(coll.active) + len(coll.skips) + len(coll.unusable)
            == coll.total_lines
            == len(lines)
        )

    def test_skip_report_csv(self, tmp_path):
        path = tmp_path / "posts.jsonl"
        write_jsonl(path, [record("a", status="removed"), "nope"])
        coll = load_posts(path)
        out = tmp_path / "skips.csv"
        coll.write_skip_report(out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "line_no,reason"
        assert len(lines) == 3


def test_is_url_only():
    assert is_url_only("", "https://a.io/b  https://c.io")
    assert is_url_only("www.example.com", "")
    assert is_url_only("  ", "")
    assert not is_url_only("hello", "https://a.io")


class TestBucketing:
    def test_march_2020_count(self):
        posts = [
            make_post(
                id=f"p{i}",
                when=dt.datetime(2020, 3, 1 + i % 28, tzinfo=dt.timezone.utc),
            )
            for i in range(1023)
        ]
        buckets = bucket_by_period(posts, "month")
        (key,) = buckets.keys()
        assert key.label() == "2020-03"
        assert len(buckets[key]) == 1023

    def test_leap_day_boundary(self):
        post = make_post(
            when=dt.datetime(2020, 2, 29, 23, 59, 59, tzinfo=dt.timezone.utc)
        )
        buckets = bucket_by_period([post], "month")
        assert next(iter(buckets)).label() == "2020-02"

    def test_sunday_monday_distinct_weeks(self):
        # 2020-03-01 is a Sunday (ISO week 2020-W09, Monday 2020-02-24);
        # 2020-03-02 is the following Monday (2020-W10)
        sunday = make_post(id="s", when=dt.datetime(2020, 3, 1, tzinfo=dt.timezone.utc))
        monday = make_post(id="m", when=dt.datetime(2020, 3, 2, tzinfo=dt.timezone.utc))
        buckets = bucket_by_period([sunday, monday], "week")
        labels = [k.label() for k in buckets]
        assert labels == ["2020-W09", "2020-W10"]
        assert next(iter(buckets)).start == dt.date(2020, 2, 24)

    @given(
        st.lists(
            st.integers(
                min_value=int(dt.datetime(2020, 1, 1, tzinfo=dt.timezone.utc).timestamp()),
                max_value=int(dt.datetime(2021, 6, 1, tzinfo=dt.timezone.utc).timestamp()),
            ),
            min_size=1,
            max_size=60,
        ),
        st.sampled_from(["month", "week"]),
    )
    @settings(max_examples=60, deadline=None)
    def test_bucketing_is_a_partition(self, stamps, granularity):
        posts = [
            Post(id=f"p{i}", author_id="u", title="t", body="b", created_utc=ts)
            for i, ts in enumerate(stamps)
        ]
        buckets = bucket_by_period(posts, granularity)
        seen = [p.id for members in buckets.values() for p in members]
        assert sorted(seen) == sorted(p.id for p in posts)
        for key, members in buckets.items():
            for p in members:
                expected = month_key if granularity == "month" else week_key
                assert expected(p.created_date()) == key


class TestStratifiedSample:
    def _collection(self, months_posts):
        from soanno.corpus import PostCollection

        posts = []
        for month, count in months_posts.items():
            year, mon = (int(x) for x in month.split("-"))
            for i in range(count):
                posts.append(
                    make_post(
                        id=f"{month}-{i}",
                        when=dt.datetime(
                            year, mon, 1 + i % 28, 6, tzinfo=dt.timezone.utc
                        ),
                    )
                )
        return PostCollection(active=posts, total_lines=len(posts))

    def test_three_months(self):
        coll = self._collection({"2020-03": 500, "2020-04": 500, "2020-05": 500})
        sample = stratified_sample(coll, per_month=100, seed=1)
        assert len(sample.active) == 300
        buckets = bucket_by_period(sample.active, "month")
        assert all(len(v) == 100 for v in buckets.values())

    def test_undersized_month_returns_all_with_flag(self):
        coll = self._collection({"2020-02": 85, "2020-03": 200})
        sample = stratified_sample(coll, per_month=100, seed=1)
        buckets = {k.label(): v for k, v in bucket_by_period(sample.active, "month").items()}
        assert len(buckets["2020-02"]) == 85
        assert len(buckets["2020-03"]) == 100
        assert sample.undersized_months == ["2020-02"]

    def test_deterministic_under_seed(self):
        coll = self._collection({"2020-03": 300})
        a = stratified_sample(coll, per_month=50, seed=9)
        b = stratified_sample(coll, per_month=50, seed=9)
        assert [p.id for p in a.active] == [p.id for p in b.active]

    def test_merge_months_pools_before_sampling(self):
        coll = self._collection({"2020-02": 40, "2020-03": 100})
        sample = stratified_sample(
            coll, per_month=100, seed=0, merge_months=[["2020-02", "2020-03"]]
        )
        assert len(sample.active) == 100
        assert sample.undersized_months == []

    def test_empty_collection(self):
        from soanno.corpus import PostCollection

        sample = stratified_sample(PostCollection(active=[]), per_month=10, seed=0)
        assert sample.active == []


class TestDomainTypes:
    def test_post_validation(self):
        with pytest.raises(ValueError):
            Post(id="", author_id="u", title="t", body="b", created_utc=10)
        with pytest.raises(ValueError):
            Post(id="x", author_id="u", title="t", body="b", created_utc=0)

    def test_intensity_levels(self):
        for level in (0, 1, 2):
            assert IntensityLevel(level).level == level
        with pytest.raises(ValueError):
            IntensityLevel(3)

    def test_work_implies_health(self):
        post = make_post()
        with pytest.raises(ValueError):
            AnnotatedPost(
                post=post,
                soa=SoaLabels(work=True, health=False),
                intensity=IntensityLevel(1),
            )
        ok = AnnotatedPost(
            post=post, soa=SoaLabels(work=True, health=True), intensity=IntensityLevel(2)
        )
        assert ok.soa.work

    def test_period_key_alignment(self):
        with pytest.raises(ValueError):
            PeriodKey("month", dt.date(2020, 3, 2))
        with pytest.raises(ValueError):
            PeriodKey("week", dt.date(2020, 3, 1))  # a Sunday
        assert PeriodKey("week", dt.date(2020, 3, 2)).label() == "2020-W10"
