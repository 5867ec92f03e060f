"""Weak label production: publisher marks, affinity segments, distant
supervision, and bootstrap correction, with full provenance.

Precedence for the base label (strongest first): the article's own click
affinity, then the publisher's affinity segment, then the publisher's mark.
Publisher marks are the noisiest signal; click behavior corrects them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .affinity import (
    AFFINITY_LOCAL,
    AFFINITY_NONLOCAL,
    ArticleAffinity,
    PublisherAffinity,
    STRONG_LOCAL,
    STRONG_NONLOCAL,
)
from .corpus import (
    ARTICLE_AFFINITY,
    BOOTSTRAP_FLIP,
    DISTANT_SUPERVISION,
    LABEL_VALUES,
    LOCAL,
    NONLOCAL,
    PUBLISHER_MARKED,
    STRONG_LOCAL_PUBLISHER,
    STRONG_NONLOCAL_PUBLISHER,
    Article,
    LabeledExample,
)
from .text import normalize_key

logger = logging.getLogger(__name__)

DEFAULT_FLIP_LOW = 0.2
DEFAULT_FLIP_HIGH = 0.8


@dataclass(frozen=True)
class LabelDecision:
    article_id: str
    label: int  # LOCAL | NONLOCAL
    source: str  # provenance rule tag
    prior_label: int | None = None
    flip_score: float | None = None

    def __post_init__(self):
        if (self.flip_score is not None) != (self.source == BOOTSTRAP_FLIP):
            raise ValueError("flip_score present iff source is BootstrapFlip")


def base_label(
    article: Article,
    publisher_aff: PublisherAffinity | None,
    article_aff: ArticleAffinity | None,
) -> LabelDecision | None:
    """Resolve one article's base label, or None when no rule fires."""
    if article_aff is not None and article_aff.verdict == AFFINITY_LOCAL:
        return LabelDecision(article.id, LOCAL, ARTICLE_AFFINITY)
    if article_aff is not None and article_aff.verdict == AFFINITY_NONLOCAL:
        return LabelDecision(article.id, NONLOCAL, ARTICLE_AFFINITY)
    if publisher_aff is not None:
        if publisher_aff.segment == STRONG_LOCAL:
            return LabelDecision(article.id, LOCAL, STRONG_LOCAL_PUBLISHER)
        if publisher_aff.segment == STRONG_NONLOCAL:
            return LabelDecision(article.id, NONLOCAL, STRONG_NONLOCAL_PUBLISHER)
    if article.publisher_label is not None:
        return LabelDecision(
            article.id, LABEL_VALUES[article.publisher_label], PUBLISHER_MARKED
        )
    return None


def _normalize_url(url: str | None) -> str:
    return normalize_key(url or "")


def distant_supervision(
    licensed: Sequence[Article], unlicensed: Sequence[Article]
) -> list[LabelDecision]:
    """Propagate labels from licensed to unlicensed articles by exact match.

    A licensed article's canonical URL is matched against unlicensed URLs,
    and its title against unlicensed titles (both after case-fold and
    whitespace-collapse). Matches that reach licensed articles with
    conflicting labels are skipped and logged. Unlicensed articles without a
    match get no decision.
    """
    by_url: dict[str, set[int]] = {}
    by_title: dict[str, set[int]] = {}
    for art in licensed:
        if art.publisher_label is None:
            continue
        label = LABEL_VALUES[art.publisher_label]
        url_key = _normalize_url(art.canonical_url)
        if url_key:
            by_url.setdefault(url_key, set()).add(label)
        title_key = normalize_key(art.title)
        if title_key:
            by_title.setdefault(title_key, set()).add(label)

    decisions = []
    for art in unlicensed:
        labels: set[int] = set()
        labels |= by_url.get(_normalize_url(art.url), set())
        labels |= by_title.get(normalize_key(art.title), set())
        if not labels:
            continue
        if len(labels) > 1:
            logger.info(
                "distant supervision conflict for article %s: matches both labels",
                art.id,
            )
            continue
        decisions.append(LabelDecision(art.id, labels.pop(), DISTANT_SUPERVISION))
    return decisions


def bootstrap_correct(
    example: LabeledExample,
    p_local: float,
    low: float = DEFAULT_FLIP_LOW,
    high: float = DEFAULT_FLIP_HIGH,
) -> LabeledExample:
    """Flip a weak label the trained scorer confidently contradicts.

    Local with p_local < low becomes NonLocal; NonLocal with p_local > high
    becomes Local; anything else is returned unchanged. Idempotent for a
    fixed p_local, and an example is never flipped twice.
    """
    if not 0.0 <= p_local <= 1.0:
        raise ValueError(f"p_local out of range: {p_local}")
    if BOOTSTRAP_FLIP in example.provenance:
        return example
    if example.label == LOCAL and p_local < low:
        new_label = NONLOCAL
    elif example.label == NONLOCAL and p_local > high:
        new_label = LOCAL
    else:
        return example
    return replace(
        example,
        label=new_label,
        provenance=example.provenance + (BOOTSTRAP_FLIP,),
    )


def flip_decision(
    example: LabeledExample,
    p_local: float,
    low: float = DEFAULT_FLIP_LOW,
    high: float = DEFAULT_FLIP_HIGH,
) -> LabelDecision | None:
    """The LabelDecision record for a bootstrap flip, or None when no flip."""
    corrected = bootstrap_correct(example, p_local, low=low, high=high)
    if corrected.label == example.label:
        return None
    return LabelDecision(
        article_id=example.article_id,
        label=corrected.label,
        source=BOOTSTRAP_FLIP,
        prior_label=example.label,
        flip_score=p_local,
    )
