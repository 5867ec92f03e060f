"""Precision/recall evaluation with aggregate and per-slice breakdowns.

Reports carry a content hash of the test set so two reports are only ever
compared over identical data. Undefined ratios (0/0) are reported as
undefined, never coerced to 0 or 1.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import LOCAL, LabeledExample
from .model import Scorer

logger = logging.getLogger(__name__)

AGGREGATE = "aggregate"
SLICE_DIMENSIONS = ("market", "language", "publisher_segment")

UNDEFINED = "–"  # rendered for 0/0 ratios in human reports


@dataclass
class SliceMetrics:
    dimension: str
    key: str
    tp: int
    fp: int
    fn: int
    tn: int
    support: int
    local_share: float
    precision: float | None
    recall: float | None

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "key": self.key,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "support": self.support,
            "local_share": self.local_share,
            "precision": self.precision,
            "recall": self.recall,
        }


@dataclass
class EvalReport:
    test_hash: str
    cutoff: float
    scorer_name: str
    slices: list[SliceMetrics]  # aggregate row first

    @property
    def aggregate(self) -> SliceMetrics:
        return self.slices[0]

    def slice(self, dimension: str, key: str) -> SliceMetrics | None:
        for s in self.slices:
            if s.dimension == dimension and s.key == key:
                return s
        return None

    def to_dict(self) -> dict:
        return {
            "test_hash": self.test_hash,
            "cutoff": self.cutoff,
            "scorer": self.scorer_name,
            "slices": [s.to_dict() for s in self.slices],
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "EvalReport":
        return cls(
            test_hash=rec["test_hash"],
            cutoff=rec["cutoff"],
            scorer_name=rec.get("scorer", ""),
            slices=[SliceMetrics(**s) for s in rec["slices"]],
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2)
            + "\n",
            encoding="utf-8",
        )
        return path

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def dataset_hash(examples: Sequence[LabeledExample]) -> str:
    """Order-independent content hash of (id, label, features)."""
    lines = sorted(f"{ex.article_id}\t{ex.label}\t{ex.features}" for ex in examples)
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def _metrics_for(
    dimension: str,
    key: str,
    rows: Sequence[tuple[int, bool]],
) -> SliceMetrics:
    tp = sum(1 for label, pred in rows if label == LOCAL and pred)
    fp = sum(1 for label, pred in rows if label != LOCAL and pred)
    fn = sum(1 for label, pred in rows if label == LOCAL and not pred)
    tn = len(rows) - tp - fp - fn
    support = len(rows)
    gold_local = tp + fn
    return SliceMetrics(
        dimension=dimension,
        key=key,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        support=support,
        local_share=gold_local / support if support else 0.0,
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
    )


def evaluate_scored(
    examples: Sequence[LabeledExample],
    scores: Sequence[float],
    cutoff: float = 0.5,
    slices: Sequence[str] = SLICE_DIMENSIONS,
    scorer_name: str = "",
) -> EvalReport:
    """Evaluate precomputed scores: predicted Local iff p_local >= cutoff."""
    if not examples:
        raise ValueError("empty test set")
    if len(scores) != len(examples):
        raise ValueError("scores and examples differ in length")
    if not 0.0 < cutoff < 1.0:
        raise ValueError("cutoff must be in (0,1)")
    unknown = [d for d in slices if d not in SLICE_DIMENSIONS]
    if unknown:
        raise ValueError(f"unknown slice dimension {unknown[0]!r}")

    rows = [(ex.label, p >= cutoff) for ex, p in zip(examples, scores)]
    out = [_metrics_for(AGGREGATE, "all", rows)]
    for dimension in slices:
        groups: dict[str, list[tuple[int, bool]]] = {}
        for ex, row in zip(examples, rows):
            value = getattr(ex, dimension)
            key = str(value) if value not in (None, "") else "(none)"
            groups.setdefault(key, []).append(row)
        for key in sorted(groups):
            out.append(_metrics_for(dimension, key, groups[key]))
    return EvalReport(
        test_hash=dataset_hash(examples),
        cutoff=cutoff,
        scorer_name=scorer_name,
        slices=out,
    )


def evaluate(
    examples: Sequence[LabeledExample],
    scorer: Scorer,
    cutoff: float = 0.5,
    slices: Sequence[str] = SLICE_DIMENSIONS,
    scorer_name: str = "",
) -> EvalReport:
    """Score a gold test set with any scorer and compute sliced metrics."""
    scores = [scorer.score(ex.features) for ex in examples]
    return evaluate_scored(
        examples, scores, cutoff=cutoff, slices=slices, scorer_name=scorer_name
    )


@dataclass
class SliceDelta:
    dimension: str
    key: str
    precision_a: float | None
    precision_b: float | None
    delta_precision: float | None
    recall_a: float | None
    recall_b: float | None
    delta_recall: float | None

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def compare(report_a: EvalReport, report_b: EvalReport) -> list[SliceDelta]:
    """Per-slice deltas (a minus b); refuses mismatched test sets."""
    if report_a.test_hash != report_b.test_hash:
        raise ValueError(
            "cannot compare reports over different test sets: "
            f"{report_a.test_hash[:12]} vs {report_b.test_hash[:12]}"
        )
    b_by_key: Mapping[tuple[str, str], SliceMetrics] = {
        (s.dimension, s.key): s for s in report_b.slices
    }
    deltas = []
    for sa in report_a.slices:
        sb = b_by_key.get((sa.dimension, sa.key))
        if sb is None:
            continue
        deltas.append(
            SliceDelta(
                dimension=sa.dimension,
                key=sa.key,
                precision_a=sa.precision,
                precision_b=sb.precision,
                delta_precision=(
                    sa.precision - sb.precision
                    if sa.precision is not None and sb.precision is not None
                    else None
                ),
                recall_a=sa.recall,
                recall_b=sb.recall,
                delta_recall=(
                    sa.recall - sb.recall
                    if sa.recall is not None and sb.recall is not None
                    else None
                ),
            )
        )
    return deltas


def _fmt(value: float | None) -> str:
    return UNDEFINED if value is None else f"{value:.3f}"


def render_markdown(report: EvalReport) -> str:
    lines = [
        f"# Evaluation report: {report.scorer_name or 'scorer'} @ cutoff {report.cutoff}",
        "",
        f"Test set `{report.test_hash[:12]}`, {report.aggregate.support} examples.",
        "",
        "| Slice | Support | Local share | TP | FP | FN | Precision | Recall |",
        "|---|---|---|---|---|---|---|---|",
    ]
    for s in report.slices:
        name = "all" if s.dimension == AGGREGATE else f"{s.dimension}={s.key}"
        lines.append(
            f"| {name} | {s.support} | {s.local_share:.3f} | {s.tp} | {s.fp} "
            f"| {s.fn} | {_fmt(s.precision)} | {_fmt(s.recall)} |"
        )
    return "\n".join(lines) + "\n"


def render_comparison_markdown(
    deltas: Sequence[SliceDelta], name_a: str, name_b: str
) -> str:
    lines = [
        f"# Comparison: {name_a} vs {name_b}",
        "",
        f"| Slice | P {name_a} | P {name_b} | ΔP | R {name_a} | R {name_b} | ΔR |",
        "|---|---|---|---|---|---|---|",
    ]
    for d in deltas:
        name = "all" if d.dimension == AGGREGATE else f"{d.dimension}={d.key}"
        dp = UNDEFINED if d.delta_precision is None else f"{d.delta_precision:+.3f}"
        dr = UNDEFINED if d.delta_recall is None else f"{d.delta_recall:+.3f}"
        lines.append(
            f"| {name} | {_fmt(d.precision_a)} | {_fmt(d.precision_b)} | {dp} "
            f"| {_fmt(d.recall_a)} | {_fmt(d.recall_b)} | {dr} |"
        )
    return "\n".join(lines) + "\n"
