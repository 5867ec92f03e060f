from datetime import datetime, timezone

import pytest

from localweak.corpus import Article, ClickRecord

WINDOW = (
    datetime(2024, 1, 1, tzinfo=timezone.utc),
    datetime(2024, 1, 29, tzinfo=timezone.utc),
)


def make_article(**overrides) -> Article:
    base = dict(
        id="a1",
        market="EN-US",
        language="en",
        title="City council approves budget",
        body="The city council approved the annual budget on Tuesday.",
        url="https://example.com/news/city-council-approves-budget",
        publisher="example",
    )
    base.update(overrides)
    return Article(**base)


def make_click(subject_id, city, state, clicks, subject_type="publisher") -> ClickRecord:
    return ClickRecord(
        subject_type=subject_type,
        subject_id=subject_id,
        city=city,
        state=state,
        clicks=clicks,
        window_start=WINDOW[0],
        window_end=WINDOW[1],
    )


@pytest.fixture
def article():
    return make_article()
