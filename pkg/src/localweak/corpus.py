"""Domain types and file I/O: articles, click logs, gazetteers, labeled datasets.

All persistent formats are UTF-8 JSON Lines except click logs (JSONL or TSV)
and gazetteers (TSV). Malformed input records are never dropped silently:
loaders return them as rejects and mirror them to `<input>.rejects.jsonl`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence
from urllib.parse import urlsplit

from .text import normalize_key, normalize_space

logger = logging.getLogger(__name__)

LOCAL = 1
NONLOCAL = 0

LABEL_NAMES = {LOCAL: "Local", NONLOCAL: "NonLocal"}
LABEL_VALUES = {"Local": LOCAL, "NonLocal": NONLOCAL}

# Provenance rule tags carried by LabeledExample, in the order rules fire.
PUBLISHER_MARKED = "PublisherMarked"
STRONG_LOCAL_PUBLISHER = "StrongLocalPublisher"
STRONG_NONLOCAL_PUBLISHER = "StrongNonLocalPublisher"
ARTICLE_AFFINITY = "ArticleAffinity"
DISTANT_SUPERVISION = "DistantSupervision"
BOOTSTRAP_FLIP = "BootstrapFlip"
FRONT_TRANSLATION = "FrontTranslation"
BACK_TRANSLATION = "BackTranslation"

RULE_TAGS = frozenset(
    {
        PUBLISHER_MARKED,
        STRONG_LOCAL_PUBLISHER,
        STRONG_NONLOCAL_PUBLISHER,
        ARTICLE_AFFINITY,
        DISTANT_SUPERVISION,
        BOOTSTRAP_FLIP,
        FRONT_TRANSLATION,
        BACK_TRANSLATION,
    }
)


class CorpusFormatError(ValueError):
    """The input file as a whole is unusable (mostly malformed records)."""


class RecordInvalid(ValueError):
    """A single record failed validation; `reason` is machine-readable."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class Article:
    """One news document as delivered by upstream extraction."""

    id: str
    market: str
    language: str
    title: str
    body: str
    url: str
    publisher: str
    publisher_label: str | None = None  # "Local" | "NonLocal" | None
    canonical_url: str | None = None
    licensed: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "market": self.market,
            "language": self.language,
            "title": self.title,
            "body": self.body,
            "url": self.url,
            "publisher": self.publisher,
            "publisher_label": self.publisher_label,
            "canonical_url": self.canonical_url,
            "licensed": self.licensed,
        }


@dataclass(frozen=True)
class ClickRecord:
    """Aggregated click count for one (subject, city, state, time window)."""

    subject_type: str  # "publisher" | "article"
    subject_id: str
    city: str  # normalized on load: case-folded, whitespace-collapsed
    state: str  # normalized on load: upper-cased
    clicks: int
    window_start: datetime
    window_end: datetime

    def merge_key(self) -> tuple:
        return (
            self.subject_type,
            self.subject_id,
            self.city,
            self.state,
            self.window_start,
            self.window_end,
        )

    def to_dict(self) -> dict:
        return {
            "subject_type": self.subject_type,
            "subject_id": self.subject_id,
            "city": self.city,
            "state": self.state,
            "clicks": self.clicks,
            "window_start": _iso(self.window_start),
            "window_end": _iso(self.window_end),
        }


@dataclass(frozen=True)
class GazetteerEntry:
    name: str  # normalized location name
    city: str
    state: str
    country: str


class Gazetteer:
    """Location-name lookup over a fixed entry set.

    Matching is whole-token and case-insensitive: an entry matches a text iff
    the entry name's tokens occur as a contiguous token run in the text.
    Lookup is deterministic; identical input text yields an identical,
    sorted match list.
    """

    def __init__(self, entries: Iterable[GazetteerEntry]):
        self.entries = tuple(
            sorted(set(entries), key=lambda e: (e.name, e.city, e.state, e.country))
        )
        # first token -> [(token tuple, entry)] for phrase matching
        self._by_first: dict[str, list[tuple[tuple[str, ...], GazetteerEntry]]] = {}
        for entry in self.entries:
            toks = tuple(entry.name.split())
            if not toks:
                continue
            self._by_first.setdefault(toks[0], []).append((toks, entry))

    @classmethod
    def load(cls, path: str | Path) -> "Gazetteer":
        """Read a TSV gazetteer with header `name\\tcity\\tstate\\tcountry`."""
        entries = []
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh, delimiter="\t")
            for row in reader:
                name = normalize_key(row.get("name") or "")
                if not name:
                    continue
                entries.append(
                    GazetteerEntry(
                        name=name,
                        city=normalize_key(row.get("city") or ""),
                        state=(row.get("state") or "").strip().upper(),
                        country=(row.get("country") or "").strip().upper(),
                    )
                )
        return cls(entries)

    def match(self, text: str) -> list[GazetteerEntry]:
        """All entries whose name occurs whole-token in `text`, sorted."""
        from .text import tokenize

        toks = tokenize(text)
        found = set()
        for i, tok in enumerate(toks):
            for name_toks, entry in self._by_first.get(tok, ()):
                if tuple(toks[i : i + len(name_toks)]) == name_toks:
                    found.add(entry)
        return sorted(found, key=lambda e: (e.name, e.city, e.state, e.country))

    def contains_any(self, text: str) -> bool:
        from .text import tokenize

        toks = tokenize(text)
        for i, tok in enumerate(toks):
            for name_toks, _ in self._by_first.get(tok, ()):
                if tuple(toks[i : i + len(name_toks)]) == name_toks:
                    return True
        return False

    def save(self, path: str | Path) -> Path:
        """Write the normalized entries back out as sorted TSV."""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
            writer.writerow(["name", "city", "state", "country"])
            for e in self.entries:
                writer.writerow([e.name, e.city, e.state, e.country])
        os.replace(tmp, path)
        return path

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class LabeledExample:
    """Feature text plus weak label and the provenance chain that produced it.

    `market`/`language` ride along so splits can stratify and reports can
    slice without re-joining against the article table.
    """

    article_id: str
    features: str
    label: int  # LOCAL=1 | NONLOCAL=0
    provenance: tuple[str, ...]
    weight: float = 1.0
    market: str = ""
    language: str = ""
    publisher_segment: str | None = None

    def __post_init__(self):
        self.provenance = tuple(self.provenance)
        if self.label not in (LOCAL, NONLOCAL):
            raise RecordInvalid("label not in {0,1}")
        if not self.provenance:
            raise RecordInvalid("empty provenance")
        unknown = [t for t in self.provenance if t not in RULE_TAGS]
        if unknown:
            raise RecordInvalid(f"unknown provenance tag {unknown[0]}")
        if sum(1 for t in self.provenance if t == BOOTSTRAP_FLIP) > 1:
            raise RecordInvalid("multiple BootstrapFlip tags")
        if not self.weight > 0:
            raise RecordInvalid("weight must be positive")

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "features": self.features,
            "label": self.label,
            "provenance": list(self.provenance),
            "weight": self.weight,
            "market": self.market,
            "language": self.language,
            "publisher_segment": self.publisher_segment,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "LabeledExample":
        for name in ("article_id", "features", "label", "provenance"):
            if name not in rec:
                raise RecordInvalid(f"missing field {name}")
        return cls(
            article_id=rec["article_id"],
            features=rec["features"],
            label=rec["label"],
            provenance=tuple(rec["provenance"]),
            weight=rec.get("weight", 1.0),
            market=rec.get("market", ""),
            language=rec.get("language", ""),
            publisher_segment=rec.get("publisher_segment"),
        )


@dataclass(frozen=True)
class Reject:
    """One rejected input record with a machine-readable reason."""

    line: int
    reason: str
    raw: str

    def to_dict(self) -> dict:
        return {"line": self.line, "reason": self.reason, "raw": self.raw}


def _iso(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _parse_ts(value: str) -> datetime:
    ts = datetime.fromisoformat(str(value).replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def article_from_dict(rec: dict) -> Article:
    """Validate one raw record against the article schema."""
    for name in ("id", "market", "language", "title", "body", "url", "publisher"):
        if name not in rec or rec[name] is None:
            raise RecordInvalid(f"missing field {name}")
    art_id = str(rec["id"]).strip()
    if not art_id:
        raise RecordInvalid("empty id")
    url = str(rec["url"])
    parts = urlsplit(url)
    if not parts.scheme or not parts.netloc:
        raise RecordInvalid("invalid url")
    market = str(rec["market"])
    language = str(rec["language"])
    if market.split("-")[0].casefold() != language.casefold():
        raise RecordInvalid("market/language mismatch")
    label = rec.get("publisher_label")
    if label is not None and label not in LABEL_VALUES:
        raise RecordInvalid("invalid publisher_label")
    return Article(
        id=art_id,
        market=market,
        language=language,
        title=str(rec["title"]),
        body=str(rec["body"]),
        url=url,
        publisher=str(rec["publisher"]),
        publisher_label=label,
        canonical_url=rec.get("canonical_url"),
        licensed=bool(rec.get("licensed", False)),
    )


def _iter_raw_records(path: Path, fmt: str):
    """Yield (line_number, raw_text, parsed_dict_or_None) for each input row."""
    if fmt == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                raw = line.rstrip("\n")
                if not raw.strip():
                    continue
                try:
                    rec = json.loads(raw)
                    if not isinstance(rec, dict):
                        rec = None
                except json.JSONDecodeError:
                    rec = None
                yield line_no, raw, rec
    elif fmt == "tsv":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh, delimiter="\t")
            for line_no, row in enumerate(reader, start=2):  # header is line 1
                raw = "\t".join("" if v is None else str(v) for v in row.values())
                yield line_no, raw, {k: v for k, v in row.items() if v not in (None, "")}
    else:
        raise ValueError(f"unsupported format {fmt!r}")


def write_rejects(input_path: str | Path, rejects: Sequence[Reject]) -> Path | None:
    """Mirror rejects next to the input as `<input>.rejects.jsonl`."""
    if not rejects:
        return None
    out = Path(str(input_path) + ".rejects.jsonl")
    write_jsonl(out, (r.to_dict() for r in rejects))
    return out


def load_articles(
    path: str | Path, fmt: str = "jsonl", write_reject_file: bool = True
) -> tuple[list[Article], list[Reject]]:
    """Load and validate articles; malformed records become rejects.

    Raises CorpusFormatError when more than half of the records are
    malformed, which indicates the wrong file or schema rather than noise.
    """
    path = Path(path)
    articles: list[Article] = []
    rejects: list[Reject] = []
    seen_ids: set[str] = set()
    for line_no, raw, rec in _iter_raw_records(path, fmt):
        if rec is None:
            rejects.append(Reject(line_no, "invalid json", raw))
            continue
        try:
            article = article_from_dict(rec)
        except RecordInvalid as err:
            rejects.append(Reject(line_no, err.reason, raw))
            continue
        if article.id in seen_ids:
            rejects.append(Reject(line_no, "duplicate id", raw))
            continue
        seen_ids.add(article.id)
        articles.append(article)
    total = len(articles) + len(rejects)
    if total and len(rejects) / total > 0.5:
        raise CorpusFormatError(
            f"{path}: {len(rejects)}/{total} records malformed; refusing to continue"
        )
    if total == 0:
        logger.warning("%s: no article records found", path)
    if write_reject_file:
        write_rejects(path, rejects)
    return articles, rejects


def click_from_dict(rec: dict) -> ClickRecord:
    """Validate one raw record against the click-log schema."""
    for name in (
        "subject_type",
        "subject_id",
        "city",
        "state",
        "clicks",
        "window_start",
        "window_end",
    ):
        if name not in rec or rec[name] is None:
            raise RecordInvalid(f"missing field {name}")
    subject_type = str(rec["subject_type"]).strip().lower()
    if subject_type not in ("publisher", "article"):
        raise RecordInvalid("invalid subject_type")
    try:
        clicks = int(rec["clicks"])
    except (TypeError, ValueError):
        raise RecordInvalid("invalid clicks") from None
    if clicks < 0:
        raise RecordInvalid("negative clicks")
    try:
        start = _parse_ts(rec["window_start"])
        end = _parse_ts(rec["window_end"])
    except ValueError:
        raise RecordInvalid("invalid window timestamp") from None
    if not start < end:
        raise RecordInvalid("window start not before end")
    return ClickRecord(
        subject_type=subject_type,
        subject_id=str(rec["subject_id"]).strip(),
        city=normalize_key(str(rec["city"])),
        state=str(rec["state"]).strip().upper(),
        clicks=clicks,
        window_start=start,
        window_end=end,
    )


def load_clicks(
    path: str | Path, write_reject_file: bool = True
) -> tuple[list[ClickRecord], list[Reject]]:
    """Load click records, summing duplicates of the same (subject, city, window).

    The merge is a plain sum, so any grouping or ordering of the input rows
    yields the same aggregate. Output is sorted by merge key.
    """
    path = Path(path)
    fmt = "tsv" if path.suffix.lower() == ".tsv" else "jsonl"
    merged: dict[tuple, ClickRecord] = {}
    rejects: list[Reject] = []
    for line_no, raw, rec in _iter_raw_records(path, fmt):
        if rec is None:
            rejects.append(Reject(line_no, "invalid json", raw))
            continue
        try:
            click = click_from_dict(rec)
        except RecordInvalid as err:
            rejects.append(Reject(line_no, err.reason, raw))
            continue
        key = click.merge_key()
        if key in merged:
            merged[key] = replace(merged[key], clicks=merged[key].clicks + click.clicks)
        else:
            merged[key] = click
    if not merged and not rejects:
        logger.warning("%s: click log is empty", path)
    if write_reject_file:
        write_rejects(path, rejects)
    return [merged[k] for k in sorted(merged)], rejects


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> Path:
    """Write one JSON object per line, atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
    os.replace(tmp, path)
    return path


def write_examples(examples: Iterable[LabeledExample], path: str | Path) -> Path:
    return write_jsonl(path, (ex.to_dict() for ex in examples))


def load_examples(path: str | Path) -> list[LabeledExample]:
    """Read a labeled dataset back; raises RecordInvalid on schema violations."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                raise RecordInvalid(f"line {line_no}: invalid json") from None
            out.append(LabeledExample.from_dict(rec))
    return out


def _split_hash(seed: int, article_id: str) -> int:
    digest = hashlib.sha256(f"{seed}\x1f{article_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def split_examples(
    examples: Sequence[LabeledExample], split_ratio: float, seed: int
) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """Deterministic train/validation split, stratified by (label, market).

    Per-stratum train counts start at floor(ratio * n) and the remainder up
    to the global target round(ratio * N) goes to the strata with the
    largest fractional quota, so every stratum is within one example of the
    requested ratio. Membership inside a stratum follows a seeded hash of
    the article id, making the split reproducible without storing it.
    """
    if not examples:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < split_ratio < 1.0:
        raise ValueError("split_ratio must be in (0,1)")
    strata: dict[tuple, list[int]] = {}
    for idx, ex in enumerate(examples):
        strata.setdefault((ex.label, ex.market), []).append(idx)

    target_total = int(split_ratio * len(examples) + 0.5)
    quotas = {key: split_ratio * len(idxs) for key, idxs in strata.items()}
    counts = {key: int(q) for key, q in quotas.items()}
    remainder = target_total - sum(counts.values())
    by_fraction = sorted(
        strata, key=lambda key: (-(quotas[key] - counts[key]), key)
    )
    for key in by_fraction[: max(remainder, 0)]:
        counts[key] += 1

    train_idx: set[int] = set()
    for key, idxs in strata.items():
        ordered = sorted(
            idxs, key=lambda i: (_split_hash(seed, examples[i].article_id), i)
        )
        train_idx.update(ordered[: counts[key]])

    train = [ex for i, ex in enumerate(examples) if i in train_idx]
    valid = [ex for i, ex in enumerate(examples) if i not in train_idx]
    return train, valid


def write_dataset(
    examples: Sequence[LabeledExample],
    path: str | Path,
    split_ratio: float = 0.9,
    seed: int = 0,
) -> tuple[Path, Path]:
    """Split and persist a dataset as `<path>.train.jsonl` / `<path>.valid.jsonl`."""
    train, valid = split_examples(examples, split_ratio, seed)
    base = str(path)
    train_path = write_examples(train, base + ".train.jsonl")
    valid_path = write_examples(valid, base + ".valid.jsonl")
    return train_path, valid_path
