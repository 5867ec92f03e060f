"""Tokenization and normalization helpers shared across the pipeline."""

from __future__ import annotations

import re

# Maximal runs of Unicode letters/digits; underscore is a separator like any
# other punctuation so URL slugs and snake_case split apart.
_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+|\n+")


def tokenize(text: str) -> list[str]:
    """Case-folded word tokens of `text`, in order."""
    return _WORD_RE.findall(text.casefold())


def normalize_space(text: str) -> str:
    """Collapse all whitespace runs to single spaces and strip the ends."""
    return " ".join(text.split())


def normalize_key(text: str) -> str:
    """Case-fold and whitespace-collapse, for exact-match lookup keys."""
    return " ".join(text.casefold().split())


def sentences(text: str) -> list[str]:
    """Split a body into sentences on terminal punctuation or newlines."""
    parts = (p.strip() for p in _SENTENCE_SPLIT_RE.split(text))
    return [p for p in parts if p]
