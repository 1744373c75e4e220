"""Element-order enumeration and selection by conditional-generation score.

Every permutation of a task's element markers is a candidate prediction
order.  Each candidate is scored by building the ordered target for every
training example, blanking the markers out, and asking a backend for the
conditional log-likelihood of that text given the sentence; the mean over
the training set ranks the permutations and the top ``m`` become the
training/inference views.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from .backend import Backend, BackendError
from .schema import ElementOrder, TaskSpec, collapse_ws, RESERVED_TOKENS, serialize_target

if TYPE_CHECKING:
    from .data import DatasetExample

DEFAULT_VIEWS = 5

_MARKERS_RE = re.compile("|".join(re.escape(t) for t in RESERVED_TOKENS))


@dataclass(frozen=True)
class OrderScore:
    order: ElementOrder
    score: float
    sample_count: int


def enumerate_orders(task: TaskSpec) -> list[ElementOrder]:
    """All permutations of the task's elements, in lexicographic marker order."""
    kinds = sorted(task.elements, key=lambda k: k.marker)
    return [ElementOrder(p) for p in itertools.permutations(kinds)]


def demark(target: str) -> str:
    """Replace markers with spaces and collapse whitespace (scoring input)."""
    return collapse_ws(_MARKERS_RE.sub(" ", target))


def score_order(
    dataset: Sequence["DatasetExample"],
    order: ElementOrder,
    scorer: Backend,
    length_normalized: bool = True,
) -> OrderScore:
    """Mean conditional log-likelihood of the order's de-marked targets."""
    if not dataset:
        raise ValueError("cannot score an order on an empty dataset")
    total = 0.0
    for index, example in enumerate(dataset):
        target = demark(serialize_target(example.gold, order))
        try:
            if length_normalized:
                total += scorer.score(example.sentence, target)
            else:
                total += scorer.score_total(example.sentence, target)
        except BackendError as exc:
            raise BackendError(
                f"scoring failed at example {index} for order {order.marker_string()}: {exc}",
                retryable=exc.retryable,
            ) from exc
    return OrderScore(order=order, score=total / len(dataset), sample_count=len(dataset))


def rank_orders(
    dataset: Sequence["DatasetExample"],
    scorer: Backend,
    task: TaskSpec,
    length_normalized: bool = True,
) -> list[OrderScore]:
    """Every order scored and sorted best-first; ties broken by marker string."""
    scored = [
        score_order(dataset, order, scorer, length_normalized=length_normalized)
        for order in enumerate_orders(task)
    ]
    scored.sort(key=lambda s: (-s.score, s.order.marker_string()))
    return scored


def select_orders(
    dataset: Sequence["DatasetExample"],
    scorer: Backend,
    m: int = DEFAULT_VIEWS,
    task: TaskSpec | None = None,
    length_normalized: bool = True,
) -> list[ElementOrder]:
    """The ``m`` best-scoring orders, best first."""
    if task is None:
        if not dataset:
            raise ValueError("need a task or a non-empty dataset")
        task = dataset[0].task
    n = len(enumerate_orders(task))
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}] for task {task.name}, got {m}")
    return [s.order for s in rank_orders(dataset, scorer, task, length_normalized=length_normalized)[:m]]


def save_orders(path: str | Path, orders: Sequence[ElementOrder]) -> None:
    Path(path).write_text("".join(o.marker_string() + "\n" for o in orders), encoding="utf-8")


def load_orders(path: str | Path, task: TaskSpec | None = None) -> list[ElementOrder]:
    orders = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        order = ElementOrder.from_marker_string(line)
        if task is not None and set(order.kinds) != set(task.elements):
            raise ValueError(f"order {line} does not match task {task.name}")
        orders.append(order)
    return orders
