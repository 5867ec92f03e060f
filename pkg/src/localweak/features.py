"""Classifier input text: topic keywords, tagline, title, and filtered URL tokens.

The four parts are concatenated in a fixed order behind section markers so the
downstream model can tell the slots apart:

    [TOPICS] t1 ... tk [TAGLINE] ... [TITLE] ... [URL] tok1 ...
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable
from urllib.parse import urlsplit

from .corpus import Article
from .text import normalize_space, sentences, tokenize

logger = logging.getLogger(__name__)

TOPICS_MARKER = "[TOPICS]"
TAGLINE_MARKER = "[TAGLINE]"
TITLE_MARKER = "[TITLE]"
URL_MARKER = "[URL]"

MARKERS = (TOPICS_MARKER, TAGLINE_MARKER, TITLE_MARKER, URL_MARKER)

# Last URL path segment is dropped when at least this share of its tokens
# also occur in the article title (it is just the slugged title then).
TITLE_OVERLAP_THRESHOLD = 0.80


@dataclass
class FeatureBundle:
    topics: list[str]
    tagline: str
    title: str
    url_tokens: list[str]
    assembled: str
    warnings: list[str] = field(default_factory=list)


class TfidfModel:
    """Corpus-level document frequencies fitted once on the training corpus.

    Term score inside a document is `count * idf` with the smoothed inverse
    document frequency `idf = ln((1 + N) / (1 + df)) + 1`, which stays finite
    for terms never seen at fit time.
    """

    def __init__(self, doc_freq: dict[str, int], total_docs: int):
        self.doc_freq = dict(doc_freq)
        self.total_docs = int(total_docs)

    @classmethod
    def fit(cls, documents: Iterable[str]) -> "TfidfModel":
        doc_freq: Counter[str] = Counter()
        total = 0
        for doc in documents:
            total += 1
            doc_freq.update(set(tokenize(doc)))
        return cls(dict(doc_freq), total)

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return math.log((1 + self.total_docs) / (1 + df)) + 1.0

    def doc_scores(self, tokens: list[str]) -> dict[str, float]:
        counts = Counter(tokens)
        return {term: count * self.idf(term) for term, count in counts.items()}

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        payload = {"total_docs": self.total_docs, "doc_freq": self.doc_freq}
        path.write_text(
            json.dumps(payload, ensure_ascii=False, sort_keys=True), encoding="utf-8"
        )
        return path

    @classmethod
    def load(cls, path: str | Path) -> "TfidfModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(payload["doc_freq"], payload["total_docs"])


def extract_topics(body: str, tfidf: TfidfModel, k: int = 10) -> list[str]:
    """Top-k body terms by TF-IDF score; ties broken lexicographically."""
    if k <= 0:
        raise ValueError("k must be positive")
    tokens = tokenize(body)
    if not tokens:
        return []
    scores = tfidf.doc_scores(tokens)
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return [term for term, _ in ranked[:k]]


def extract_tagline(body: str, tfidf: TfidfModel) -> str:
    """The body sentence with the highest summed TF-IDF token score.

    Stand-in for an extractive summarizer: the score of a sentence is the sum
    over its token occurrences of that term's TF-IDF weight in the whole
    body. Ties keep the earliest sentence.
    """
    candidates = sentences(body)
    if not candidates:
        return ""
    doc_scores = tfidf.doc_scores(tokenize(body))
    best, best_score = candidates[0], float("-inf")
    for sentence in candidates:
        score = sum(doc_scores.get(tok, 0.0) for tok in tokenize(sentence))
        if score > best_score:
            best, best_score = sentence, score
    return normalize_space(best)


def registrable_domain(host: str) -> str:
    """Approximate eTLD+1: the last two dot-labels of the host."""
    labels = [l for l in host.casefold().split(".") if l]
    return ".".join(labels[-2:]) if len(labels) >= 2 else (labels[0] if labels else "")


def _segment_tokens(segment: str) -> list[str]:
    # Segments split on '-' and '_' then case-fold; tokenize() does both and
    # also strips any stray punctuation consistently with title tokens.
    return tokenize(segment)


def extract_url_tokens(
    url: str, title: str, publisher_domain: str = ""
) -> tuple[list[str], list[str]]:
    """Tokenize the URL path, filtering publisher, numbers, and slugged titles.

    In order: drop scheme/query/fragment, split the path on '/', drop the
    host, split segments on '-'/'_' and case-fold, drop purely-numeric
    tokens, and drop the whole last segment when >= 80% of its remaining
    tokens also occur in the title (it is just a slug of the title then).
    Returns (tokens, warnings). `publisher_domain` is an optional hint for
    recognizing the host in scheme-less URLs.
    """
    try:
        parts = urlsplit(url.strip())
    except ValueError:
        return [], ["url unparsable"]
    segments = [seg for seg in parts.path.split("/") if seg]
    if not parts.scheme and not parts.netloc:
        # Scheme-less URLs carry the host as the first path segment; anything
        # without even a dotted or publisher-matching head is not a URL.
        first = segments[0].casefold() if segments else ""
        if "." in first or (publisher_domain and first == publisher_domain.casefold()):
            segments = segments[1:]
        else:
            return [], ["url unparsable"]
    token_runs = [
        [tok for tok in _segment_tokens(seg) if not tok.isdigit()] for seg in segments
    ]
    if token_runs and token_runs[-1]:
        last = token_runs[-1]
        title_tokens = set(tokenize(title))
        overlap = sum(1 for tok in last if tok in title_tokens) / len(last)
        if overlap >= TITLE_OVERLAP_THRESHOLD:
            token_runs = token_runs[:-1]
    return [tok for run in token_runs for tok in run], []


def assemble(article: Article, tfidf: TfidfModel, topic_k: int = 10) -> FeatureBundle:
    """Build the full feature bundle for one article.

    Pure in (article, fitted state); missing parts produce empty sections but
    every marker appears exactly once, and the assembled text is one line.
    """
    topics = extract_topics(article.body, tfidf, k=topic_k)
    tagline = extract_tagline(article.body, tfidf)
    title = normalize_space(article.title)
    url_tokens, warnings = extract_url_tokens(
        article.url, article.title, publisher_domain=article.publisher
    )
    sections = [
        (TOPICS_MARKER, " ".join(topics)),
        (TAGLINE_MARKER, tagline),
        (TITLE_MARKER, title),
        (URL_MARKER, " ".join(url_tokens)),
    ]
    assembled = " ".join(
        marker + (" " + content if content else "") for marker, content in sections
    )
    return FeatureBundle(
        topics=topics,
        tagline=tagline,
        title=title,
        url_tokens=url_tokens,
        assembled=assembled,
        warnings=warnings,
    )


def split_sections(assembled: str) -> dict[str, str]:
    """Recover the four marker sections from an assembled feature text."""
    positions = []
    for marker in MARKERS:
        idx = assembled.find(marker)
        if idx < 0:
            raise ValueError(f"feature text missing section marker {marker}")
        positions.append((idx, marker))
    positions.sort()
    out = {}
    for (start, marker), nxt in zip(positions, positions[1:] + [(len(assembled), "")]):
        out[marker] = assembled[start + len(marker) : nxt[0]].strip()
    return out
