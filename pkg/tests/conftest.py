import datetime as dt

import pytest

from soanno.corpus import Post, PostStatus


def make_post(
    id="p1",
    author="u1",
    title="a title",
    body="some body text.",
    when=dt.datetime(2020, 3, 15, 12, 0, tzinfo=dt.timezone.utc),
    status=PostStatus.ACTIVE,
) -> Post:
    return Post(
        id=id,
        author_id=author,
        title=title,
        body=body,
        created_utc=int(when.timestamp()),
        status=status,
    )


@pytest.fixture
def post_factory():
    return make_post
