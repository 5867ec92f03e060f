"""Click-distribution mining: gap ratios and location affinity of publishers
and articles.

A subject's clicks are aggregated per city, low-volume cities are cut, and
the remaining shares are compared against the top city. Cities whose share
stays within the gap-ratio threshold of the maximum are the subject's
affinity cities; their geographic spread determines the segment.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import ClickRecord, write_jsonl

logger = logging.getLogger(__name__)

STRONG_LOCAL = "StrongLocal"
STRONG_NONLOCAL = "StrongNonLocal"
AMBIGUOUS = "Ambiguous"

AFFINITY_LOCAL = "Local"
AFFINITY_NONLOCAL = "NonLocal"
AFFINITY_UNKNOWN = "Unknown"

DEFAULT_MIN_CLICKS = 50
DEFAULT_GAP_THRESHOLD = 0.25
DEFAULT_MAX_LOCAL_CITIES = 10

# A publisher whose affinity cities span more than this many states is
# national in reach.
NONLOCAL_STATE_SPAN = 2


@dataclass(frozen=True)
class CityShare:
    city: str
    state: str
    clicks: int
    share: float


@dataclass
class CityDistribution:
    """Click shares over the cities that survive the minimum-click cutoff."""

    subject: str
    rows: list[CityShare]

    def __bool__(self) -> bool:
        return bool(self.rows)


@dataclass(frozen=True)
class CityGap:
    city: str
    state: str
    share: float
    gap: float  # (share - max_share) / max_share, <= 0
    selected: bool


@dataclass
class GapRatioResult:
    subject: str
    threshold: float
    rows: list[CityGap]

    def selected_cities(self) -> list[tuple[str, str]]:
        return [(r.city, r.state) for r in self.rows if r.selected]


@dataclass
class PublisherAffinity:
    publisher: str
    selected_cities: list[tuple[str, str]]
    segment: str  # StrongLocal | StrongNonLocal | Ambiguous
    insufficient_data: bool = False

    def to_dict(self) -> dict:
        return {
            "publisher": self.publisher,
            "selected_cities": [list(c) for c in self.selected_cities],
            "segment": self.segment,
            "insufficient_data": self.insufficient_data,
        }


@dataclass(frozen=True)
class ArticleAffinity:
    verdict: str  # Local | NonLocal | Unknown
    city: str | None = None
    state: str | None = None


def city_distribution(
    clicks: Iterable[ClickRecord], subject: str, min_clicks: int = DEFAULT_MIN_CLICKS
) -> CityDistribution:
    """Aggregate a subject's clicks per (city, state) and normalize shares.

    Cities must exceed `min_clicks` (strictly) across all windows to be
    retained. An empty result signals insufficient data, not an error.
    """
    totals: dict[tuple[str, str], int] = {}
    for rec in clicks:
        if rec.subject_id != subject:
            continue
        key = (rec.city, rec.state)
        totals[key] = totals.get(key, 0) + rec.clicks
    retained = {key: n for key, n in totals.items() if n > min_clicks}
    grand = sum(retained.values())
    rows = [
        CityShare(city=city, state=state, clicks=n, share=n / grand)
        for (city, state), n in sorted(
            retained.items(), key=lambda kv: (-kv[1], kv[0])
        )
    ]
    return CityDistribution(subject=subject, rows=rows)


def gap_ratios(
    dist: CityDistribution, threshold: float = DEFAULT_GAP_THRESHOLD
) -> GapRatioResult:
    """Gap of every city's share against the maximum share, with selection.

    gap = (share - max_share) / max_share, always <= 0; a city is selected
    iff share > (1 - threshold) * max_share, i.e. |gap| < threshold. The
    top city has gap 0 and is always selected.
    """
    if not dist.rows:
        raise ValueError("no distribution")
    max_share = max(r.share for r in dist.rows)
    cutoff = (1.0 - threshold) * max_share
    rows = [
        CityGap(
            city=r.city,
            state=r.state,
            share=r.share,
            gap=(r.share - max_share) / max_share,
            selected=r.share > cutoff,
        )
        for r in dist.rows
    ]
    return GapRatioResult(subject=dist.subject, threshold=threshold, rows=rows)


def classify_publisher(
    selected: Sequence[tuple[str, str]],
    max_local_cities: int = DEFAULT_MAX_LOCAL_CITIES,
) -> str:
    """Segment a publisher by the geographic spread of its affinity cities.

    StrongLocal: all selected cities in one state and fewer than
    `max_local_cities` of them. StrongNonLocal: cities across more than two
    states. Everything else (including exactly two states, or one state with
    too many cities) is Ambiguous, as is an empty selection.
    """
    cities = set(selected)
    if not cities:
        return AMBIGUOUS
    states = {state for _, state in cities}
    if len(states) == 1 and len(cities) < max_local_cities:
        return STRONG_LOCAL
    if len(states) > NONLOCAL_STATE_SPAN:
        return STRONG_NONLOCAL
    return AMBIGUOUS


def publisher_affinity(
    clicks: Iterable[ClickRecord],
    publisher: str,
    min_clicks: int = DEFAULT_MIN_CLICKS,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    max_local_cities: int = DEFAULT_MAX_LOCAL_CITIES,
) -> tuple[PublisherAffinity, CityDistribution, GapRatioResult | None]:
    """Full publisher pipeline: distribution -> gap selection -> segment."""
    dist = city_distribution(clicks, publisher, min_clicks=min_clicks)
    if not dist:
        aff = PublisherAffinity(
            publisher=publisher,
            selected_cities=[],
            segment=AMBIGUOUS,
            insufficient_data=True,
        )
        return aff, dist, None
    gaps = gap_ratios(dist, threshold=gap_threshold)
    selected = gaps.selected_cities()
    segment = classify_publisher(selected, max_local_cities=max_local_cities)
    aff = PublisherAffinity(
        publisher=publisher, selected_cities=selected, segment=segment
    )
    return aff, dist, gaps


def article_affinity(
    clicks: Iterable[ClickRecord],
    article_id: str,
    min_clicks: int = DEFAULT_MIN_CLICKS,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    max_local_cities: int = DEFAULT_MAX_LOCAL_CITIES,
) -> ArticleAffinity:
    """Location affinity of a single article from its own click pattern.

    Publisher thresholds are reused at article scope. Local carries the
    top-share city; Unknown absorbs every degenerate case.
    """
    dist = city_distribution(clicks, article_id, min_clicks=min_clicks)
    if not dist:
        return ArticleAffinity(AFFINITY_UNKNOWN)
    gaps = gap_ratios(dist, threshold=gap_threshold)
    selected = gaps.selected_cities()
    segment = classify_publisher(selected, max_local_cities=max_local_cities)
    if segment == STRONG_LOCAL:
        top = dist.rows[0]
        return ArticleAffinity(AFFINITY_LOCAL, city=top.city, state=top.state)
    if segment == STRONG_NONLOCAL:
        return ArticleAffinity(AFFINITY_NONLOCAL)
    return ArticleAffinity(AFFINITY_UNKNOWN)


def write_affinities(
    records: Iterable[tuple[PublisherAffinity, CityDistribution, GapRatioResult | None]],
    path: str | Path,
) -> Path:
    """Emit one audit record per publisher: distribution, gaps, segment."""
    rows = []
    for aff, dist, gaps in records:
        rows.append(
            {
                **aff.to_dict(),
                "distribution": [
                    {
                        "city": r.city,
                        "state": r.state,
                        "clicks": r.clicks,
                        "share": r.share,
                    }
                    for r in dist.rows
                ],
                "gaps": [
                    {
                        "city": g.city,
                        "state": g.state,
                        "gap": g.gap,
                        "selected": g.selected,
                    }
                    for g in (gaps.rows if gaps else [])
                ],
            }
        )
    return write_jsonl(path, rows)


def load_affinities(path: str | Path) -> dict[str, PublisherAffinity]:
    """Read `affinity.jsonl` back into a publisher -> affinity map."""
    out: dict[str, PublisherAffinity] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out[rec["publisher"]] = PublisherAffinity(
                publisher=rec["publisher"],
                selected_cities=[tuple(c) for c in rec["selected_cities"]],
                segment=rec["segment"],
                insufficient_data=rec.get("insufficient_data", False),
            )
    return out
