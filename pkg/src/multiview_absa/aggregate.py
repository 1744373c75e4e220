"""Combining per-view predictions into a final tuple set.

The main strategy keeps every tuple appearing in at least half of the
views (count >= m/2, ties included); rank and random selection of a
single view are ablation strategies, and single-view order choice
covers the random/heuristic/rank baselines.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .backend import Backend, CapabilityError
from .orders import enumerate_orders, select_orders
from .schema import ElementKind, ElementOrder, SentimentTuple, TaskSpec

HEURISTIC_KINDS = (ElementKind.ASPECT, ElementKind.OPINION, ElementKind.CATEGORY, ElementKind.POLARITY)


@dataclass(frozen=True)
class ViewPrediction:
    """One order's parsed generation: deduplicated tuples plus its score."""

    order: ElementOrder
    tuples: tuple[SentimentTuple, ...]
    sequence_score: float
    truncated: bool = False

    @classmethod
    def from_tuples(
        cls,
        order: ElementOrder,
        tuples: Sequence[SentimentTuple],
        sequence_score: float,
        truncated: bool = False,
    ) -> "ViewPrediction":
        unique: dict[tuple, SentimentTuple] = {}
        for t in tuples:
            unique.setdefault(t.key(), t)
        return cls(
            order=order,
            tuples=tuple(unique.values()),
            sequence_score=sequence_score,
            truncated=truncated,
        )


def vote(views: Sequence[ViewPrediction]) -> list[SentimentTuple]:
    """Tuples present in at least half of the views (2*count >= m).

    Each view contributes at most one count per tuple.  Note the m=2
    boundary: a tuple seen by a single view of two survives (1 >= 2/2 is
    false, but 2*1 >= 2 holds, i.e. the threshold is non-strict m/2).
    """
    if not views:
        raise ValueError("vote needs at least one view")
    m = len(views)
    counts: dict[tuple, int] = {}
    first_seen: dict[tuple, SentimentTuple] = {}
    for view in views:
        for t in view.tuples:
            key = t.key()
            counts[key] = counts.get(key, 0) + 1
            first_seen.setdefault(key, t)
    return [first_seen[key] for key, count in counts.items() if 2 * count >= m]


def rank_select(views: Sequence[ViewPrediction]) -> list[SentimentTuple]:
    """Tuples of the best-scoring view (highest mean log-probability).

    Truncated views are skipped unless every view is truncated; ties are
    broken toward the lexicographically smallest order string.
    """
    if not views:
        raise ValueError("rank_select needs at least one view")
    candidates = [v for v in views if not v.truncated] or list(views)
    best = min(candidates, key=lambda v: (-v.sequence_score, v.order.marker_string()))
    return list(best.tuples)


def random_select(views: Sequence[ViewPrediction], seed: int) -> list[SentimentTuple]:
    """Tuples of a uniformly chosen view; reproducible for a fixed seed."""
    if not views:
        raise ValueError("random_select needs at least one view")
    return list(views[random.Random(seed).randrange(len(views))].tuples)


def single_view_order(
    strategy: str,
    task: TaskSpec,
    dataset: Sequence | None = None,
    scorer: Backend | None = None,
    seed: int = 0,
) -> ElementOrder:
    """Pick the one order used by a single-view baseline.

    ``random`` draws a seeded uniform permutation, ``heuristic`` uses the
    aspect-opinion-category-polarity order restricted to the task's
    elements, and ``rank`` delegates to order selection with m=1.
    """
    if strategy == "random":
        orders = enumerate_orders(task)
        return orders[random.Random(seed).randrange(len(orders))]
    if strategy == "heuristic":
        return ElementOrder(tuple(k for k in HEURISTIC_KINDS if k in task.elements))
    if strategy == "rank":
        if scorer is None or not scorer.capabilities.supports_score:
            raise CapabilityError("rank order selection requires a scoring backend")
        if not dataset:
            raise ValueError("rank order selection requires a dataset")
        return select_orders(dataset, scorer, m=1, task=task)[0]
    raise ValueError(f"unknown single-view strategy {strategy!r}")
