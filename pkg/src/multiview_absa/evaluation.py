"""Exact-match tuple F1 with micro-averaging and multi-run aggregation.

A predicted tuple counts only if every element exactly matches a gold
tuple (after case/whitespace normalization); counts are pooled over the
corpus before computing one precision/recall/F1.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from .schema import SentimentTuple


@dataclass(frozen=True)
class MatchCounts:
    tp: int = 0
    predicted: int = 0
    gold: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.predicted, self.gold) < 0:
            raise ValueError("counts must be non-negative")
        if self.tp > min(self.predicted, self.gold):
            raise ValueError(f"tp={self.tp} exceeds predicted={self.predicted} or gold={self.gold}")

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.predicted + other.predicted, self.gold + other.gold)


def _signature(tuples: Sequence[SentimentTuple]) -> frozenset:
    return frozenset(t.kinds() for t in tuples)


def match_counts(pred: Sequence[SentimentTuple], gold: Sequence[SentimentTuple]) -> MatchCounts:
    """Exact-match counts for one example (sets under normalized equality)."""
    signatures = _signature(pred) | _signature(gold)
    if len(signatures) > 1:
        raise ValueError(f"pred/gold tuples mix element sets: {sorted(map(str, signatures))}")
    pred_keys = {t.key() for t in pred}
    gold_keys = {t.key() for t in gold}
    return MatchCounts(tp=len(pred_keys & gold_keys), predicted=len(pred_keys), gold=len(gold_keys))


def micro_f1(counts: MatchCounts) -> tuple[float, float, float]:
    """(precision, recall, f1) with the all-zero conventions."""
    precision = counts.tp / counts.predicted if counts.predicted else 0.0
    recall = counts.tp / counts.gold if counts.gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def aggregate_runs(scores: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single run)."""
    if not scores:
        raise ValueError("scores must be non-empty")
    if len(set(scores)) == 1:
        return scores[0], 0.0
    return statistics.fmean(scores), statistics.stdev(scores)


@dataclass(frozen=True)
class RunRecord:
    """Machine-readable result of one evaluation run."""

    task: str
    dataset: str
    seed: int
    m: int
    strategy: str
    precision: float
    recall: float
    f1: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))


def write_record(record: RunRecord, path: str | Path) -> None:
    Path(path).write_text(record.to_json() + "\n", encoding="utf-8")


def read_records(paths: Sequence[str | Path]) -> list[RunRecord]:
    return [RunRecord.from_json(Path(p).read_text(encoding="utf-8")) for p in paths]


def format_report(counts: MatchCounts, label: str = "") -> str:
    precision, recall, f1 = micro_f1(counts)
    prefix = f"{label}: " if label else ""
    return (
        f"{prefix}tp={counts.tp} pred={counts.predicted} gold={counts.gold} "
        f"precision={precision:.4f} recall={recall:.4f} f1={f1:.4f}"
    )
