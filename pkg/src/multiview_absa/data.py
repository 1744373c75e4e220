"""Dataset ingestion, training-pair construction and multi-task assembly.

Benchmark files are line-oriented: ``sentence####<tuple list literal>``,
where the literal is a bracketed list of quoted-string lists.  Element
positions are task-specific (quads: aspect, category, polarity, opinion;
ASTE: aspect, opinion, polarity; TASD: aspect, category, polarity) and
file polarity words (positive/neutral/negative) map to POS/NEU/NEG.
"""

from __future__ import annotations

import ast
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .schema import (
    ElementKind,
    ElementOrder,
    SentimentTuple,
    TaskSpec,
    TASK_ELEMENTS,
    build_input,
    make_task,
    normalize_term,
    serialize_target,
)

FILE_POLARITY = {"positive": "POS", "neutral": "NEU", "negative": "NEG"}
POLARITY_FILE_WORD = {v: k for k, v in FILE_POLARITY.items()}

SPLITS = ("train", "dev", "test")


class DatasetError(ValueError):
    """Malformed dataset file content."""


@dataclass(frozen=True)
class DatasetExample:
    sentence: str
    gold: tuple[SentimentTuple, ...]
    task: TaskSpec
    split: str = "train"


@dataclass(frozen=True)
class TrainingPair:
    input: str
    target: str
    order: ElementOrder


def _tuple_positions(task_name: str) -> tuple[ElementKind, ...]:
    if task_name in ("ASQP", "ACOS"):
        return (ElementKind.ASPECT, ElementKind.CATEGORY, ElementKind.POLARITY, ElementKind.OPINION)
    if task_name == "ASTE":
        return (ElementKind.ASPECT, ElementKind.OPINION, ElementKind.POLARITY)
    if task_name == "TASD":
        return (ElementKind.ASPECT, ElementKind.CATEGORY, ElementKind.POLARITY)
    raise DatasetError(f"unknown task {task_name!r}")


def _parse_line(line: str, line_no: int, task_name: str) -> tuple[str, list[dict[ElementKind, str]]]:
    parts = line.split("####")
    if len(parts) != 2:
        raise DatasetError(f"line {line_no}: expected exactly one '####' separator")
    sentence, literal = parts[0].strip(), parts[1].strip()
    if not sentence:
        raise DatasetError(f"line {line_no}: empty sentence")
    try:
        value = ast.literal_eval(literal)
    except (ValueError, SyntaxError) as exc:
        raise DatasetError(f"line {line_no}: bad tuple literal: {exc}") from None
    positions = _tuple_positions(task_name)
    if not isinstance(value, list) or not value:
        raise DatasetError(f"line {line_no}: tuple literal must be a non-empty list")
    records = []
    for item in value:
        if not isinstance(item, (list, tuple)) or len(item) != len(positions) or not all(
            isinstance(x, str) for x in item
        ):
            raise DatasetError(
                f"line {line_no}: each tuple must be a list of {len(positions)} strings, got {item!r}"
            )
        fields = dict(zip(positions, item))
        word = fields[ElementKind.POLARITY]
        if word not in FILE_POLARITY:
            raise DatasetError(f"line {line_no}: unknown polarity word {word!r}")
        fields[ElementKind.POLARITY] = FILE_POLARITY[word]
        records.append(fields)
    return sentence, records


def scan_categories(paths: Iterable[str | Path], task_name: str) -> tuple[str, ...]:
    """Collect the distinct category labels appearing in the given files."""
    task_name = task_name.upper()
    if ElementKind.CATEGORY not in TASK_ELEMENTS[task_name]:
        return ()
    seen: set[str] = set()
    for path in paths:
        for line_no, line in enumerate(_lines(path), start=1):
            _, records = _parse_line(line, line_no, task_name)
            for fields in records:
                seen.add(fields[ElementKind.CATEGORY])
    return tuple(sorted(seen))


def _lines(path: str | Path) -> list[str]:
    raw = Path(path).read_text(encoding="utf-8")
    return [line for line in raw.splitlines() if line.strip()]


def load_dataset(path: str | Path, task: TaskSpec, split: str = "train") -> list[DatasetExample]:
    """Parse one benchmark file into examples conforming to ``task``."""
    examples = []
    for line_no, line in enumerate(_lines(path), start=1):
        sentence, records = _parse_line(line, line_no, task.name)
        gold = []
        for fields in records:
            category = fields.get(ElementKind.CATEGORY)
            if category is not None and task.categories and category not in task.categories:
                raise DatasetError(f"line {line_no}: category {category!r} not in task vocabulary")
            gold.append(
                SentimentTuple(
                    aspect=fields[ElementKind.ASPECT],
                    polarity=fields[ElementKind.POLARITY],
                    category=category,
                    opinion=fields.get(ElementKind.OPINION),
                )
            )
        examples.append(DatasetExample(sentence=sentence, gold=tuple(gold), task=task, split=split))
    return examples


def load_dataset_auto(
    path: str | Path, task_name: str, dataset_name: str = "", split: str = "train"
) -> list[DatasetExample]:
    """Load a file, deriving the category vocabulary from the file itself."""
    categories = scan_categories([path], task_name)
    task = make_task(task_name, dataset_name, categories)
    return load_dataset(path, task, split)


def write_dataset(examples: Sequence[DatasetExample], path: str | Path) -> None:
    """Emit examples in the input file format (inverse of load_dataset)."""
    lines = []
    for ex in examples:
        positions = _tuple_positions(ex.task.name)
        rows = []
        for t in ex.gold:
            row = []
            for kind in positions:
                value = t.get(kind)
                row.append(POLARITY_FILE_WORD[value] if kind is ElementKind.POLARITY else value)
            rows.append(row)
        lines.append(f"{ex.sentence}####{rows!r}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def build_training_pairs(
    dataset: Sequence[DatasetExample],
    orders: Sequence[ElementOrder],
    task_prefix: str | None = None,
) -> list[TrainingPair]:
    """One (input, target) pair per example per order, dataset-major."""
    if not orders:
        raise ValueError("orders must be non-empty")
    pairs = []
    for ex in dataset:
        for order in orders:
            pairs.append(
                TrainingPair(
                    input=build_input(ex.sentence, order, task_prefix),
                    target=serialize_target(ex.gold, order),
                    order=order,
                )
            )
    return pairs


def build_training_pairs_multi(
    dataset: Sequence[DatasetExample],
    orders_by_dataset: dict[tuple[str, str], Sequence[ElementOrder]],
) -> list[TrainingPair]:
    """Training pairs where each example uses its own dataset's orders."""
    pairs = []
    for ex in dataset:
        key = (ex.task.name, ex.task.dataset)
        try:
            orders = orders_by_dataset[key]
        except KeyError:
            raise ValueError(f"no orders for dataset {key}") from None
        for order in orders:
            pairs.append(
                TrainingPair(
                    input=build_input(ex.sentence, order),
                    target=serialize_target(ex.gold, order),
                    order=order,
                )
            )
    return pairs


def subsample(dataset: Sequence[DatasetExample], fraction: float, seed: int) -> list[DatasetExample]:
    """Seeded sample of floor(n * fraction) examples (at least one),
    without replacement, preserving the original order."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0 or not dataset:
        return list(dataset)
    k = max(1, int(len(dataset) * fraction))
    indexes = sorted(random.Random(seed).sample(range(len(dataset)), k))
    return [dataset[i] for i in indexes]


def task_prefix(task: TaskSpec) -> str:
    return f"{task.name}: {task.dataset}: "


def build_multitask(
    train_sets: Sequence[tuple[TaskSpec, Sequence[DatasetExample]]],
    test_sets: Sequence[tuple[TaskSpec, Sequence[DatasetExample]]],
    split_seed: int,
) -> tuple[list[DatasetExample], list[DatasetExample]]:
    """Assemble one prefixed multi-task corpus with leakage filtering.

    Training examples whose normalized sentence appears in any test set
    are dropped, every survivor gets a "TASK: dataset: " prefix, and the
    pool is split 9:1 (seeded shuffle, train = round(0.9 n)) into
    train/dev.
    """
    blocked = {
        normalize_term(ex.sentence)
        for _, examples in test_sets
        for ex in examples
    }
    pool = []
    for task, examples in train_sets:
        prefix = task_prefix(task)
        for ex in examples:
            if normalize_term(ex.sentence) in blocked:
                continue
            pool.append(replace(ex, sentence=f"{prefix}{ex.sentence}"))
    random.Random(split_seed).shuffle(pool)
    n_train = int(round(0.9 * len(pool)))
    train = [replace(ex, split="train") for ex in pool[:n_train]]
    dev = [replace(ex, split="dev") for ex in pool[n_train:]]
    return train, dev


@dataclass(frozen=True)
class StatsRow:
    task: str
    dataset: str
    split: str
    sentences: int
    pos: int
    neu: int
    neg: int
    categories: int

    @property
    def tuples(self) -> int:
        return self.pos + self.neu + self.neg


def dataset_stats(
    groups: Sequence[tuple[TaskSpec, str, Sequence[DatasetExample]]]
) -> list[StatsRow]:
    """Per-split sentence and polarity-tuple counts (benchmark summary layout)."""
    rows = []
    for task, split, examples in groups:
        counts = {"POS": 0, "NEU": 0, "NEG": 0}
        categories: set[str] = set()
        for ex in examples:
            for t in ex.gold:
                counts[t.polarity] += 1
                if t.category is not None:
                    categories.add(t.category)
        rows.append(
            StatsRow(
                task=task.name,
                dataset=task.dataset,
                split=split,
                sentences=len(examples),
                pos=counts["POS"],
                neu=counts["NEU"],
                neg=counts["NEG"],
                categories=len(categories),
            )
        )
    return rows


def format_stats(rows: Sequence[StatsRow]) -> str:
    header = f"{'task':<6}{'dataset':<12}{'split':<7}{'sent':>7}{'POS':>7}{'NEU':>7}{'NEG':>7}{'cat':>6}"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.task:<6}{r.dataset:<12}{r.split:<7}{r.sentences:>7}{r.pos:>7}{r.neu:>7}{r.neg:>7}{r.categories:>6}"
        )
    return "\n".join(lines)
