"""Sentiment tuple schema: markers, label paraphrasing, target (de)serialization.

Single source of truth for the tuple structure shared by dataset loading,
target construction, constrained decoding, aggregation and evaluation.

Targets render each tuple as marker-prefixed elements in a chosen order,
e.g. ``[O] love [A] sushi [C] food [S] great``, with multiple tuples
joined by ``[SSEP]``.  Canonical labels (``POS``/``NEU``/``NEG``,
``NULL``, dataset category codes) are paraphrased to natural-language
surface forms on the way out and recovered on the way back in.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache


class ElementKind(Enum):
    """One sentiment element; the value is its target marker."""

    ASPECT = "[A]"
    CATEGORY = "[C]"
    OPINION = "[O]"
    POLARITY = "[S]"

    @property
    def marker(self) -> str:
        return self.value


SSEP = "[SSEP]"
RESERVED_TOKENS = tuple(k.marker for k in ElementKind) + (SSEP,)

POLARITY_LABELS = ("POS", "NEU", "NEG")
POLARITY_SURFACE = {"POS": "great", "NEU": "neutral", "NEG": "bad"}
SURFACE_POLARITY = {v: k for k, v in POLARITY_SURFACE.items()}
NULL_LABEL = "NULL"
NULL_SURFACE = "it"

TASK_ELEMENTS = {
    "ASQP": (ElementKind.ASPECT, ElementKind.CATEGORY, ElementKind.OPINION, ElementKind.POLARITY),
    "ACOS": (ElementKind.ASPECT, ElementKind.CATEGORY, ElementKind.OPINION, ElementKind.POLARITY),
    "ASTE": (ElementKind.ASPECT, ElementKind.OPINION, ElementKind.POLARITY),
    "TASD": (ElementKind.ASPECT, ElementKind.CATEGORY, ElementKind.POLARITY),
}

_MARKER_RE = re.compile(r"\[[A-Z]+\]")
_WS_RE = re.compile(r"\s+")


class SchemaError(ValueError):
    """Raised on schema violations: bad labels, order/tuple mismatches."""


def normalize_term(text: str) -> str:
    """Lowercase, trim and collapse internal whitespace (tuple equality)."""
    return _WS_RE.sub(" ", text.strip()).lower()


def collapse_ws(text: str) -> str:
    return _WS_RE.sub(" ", text.strip())


@dataclass(frozen=True)
class TaskSpec:
    """A tuple-prediction task bound to a dataset and its category vocabulary."""

    name: str
    dataset: str = ""
    categories: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.name not in TASK_ELEMENTS:
            raise SchemaError(f"unknown task {self.name!r}; expected one of {sorted(TASK_ELEMENTS)}")
        has_category = ElementKind.CATEGORY in self.elements
        if has_category and not self.categories:
            raise SchemaError(f"task {self.name} requires a non-empty category vocabulary")
        if not has_category and self.categories:
            raise SchemaError(f"task {self.name} takes no category vocabulary")

    @property
    def elements(self) -> tuple[ElementKind, ...]:
        return TASK_ELEMENTS[self.name]


def make_task(name: str, dataset: str = "", categories: tuple[str, ...] | list[str] = ()) -> TaskSpec:
    return TaskSpec(name=name.upper(), dataset=dataset, categories=tuple(categories))


@lru_cache(maxsize=None)
def _category_surface_map(task: TaskSpec) -> dict[str, str]:
    # surface (normalized) -> canonical dataset label; sorted for a
    # deterministic winner if two labels collide after paraphrasing
    mapping: dict[str, str] = {}
    for label in sorted(task.categories):
        surface = normalize_term(_category_surface(label))
        mapping.setdefault(surface, label)
    return mapping


def _category_surface(label: str) -> str:
    return collapse_ws(label.lower().replace("#", " ").replace("_", " "))


@dataclass(frozen=True)
class SentimentTuple:
    """One sentiment tuple in canonical label space.

    ``category``/``opinion`` are ``None`` for tasks that do not predict
    them; ``aspect`` and ``opinion`` may be the implicit label ``NULL``.
    """

    aspect: str
    polarity: str
    category: str | None = None
    opinion: str | None = None

    def __post_init__(self) -> None:
        if self.polarity not in POLARITY_LABELS:
            raise SchemaError(f"polarity must be one of {POLARITY_LABELS}, got {self.polarity!r}")
        for value in (self.aspect, self.category, self.opinion):
            if value is None:
                continue
            for token in RESERVED_TOKENS:
                if token in value:
                    raise SchemaError(f"reserved token {token} inside element value {value!r}")

    def get(self, kind: ElementKind) -> str | None:
        if kind is ElementKind.ASPECT:
            return self.aspect
        if kind is ElementKind.CATEGORY:
            return self.category
        if kind is ElementKind.OPINION:
            return self.opinion
        return self.polarity

    def kinds(self) -> tuple[ElementKind, ...]:
        present = [ElementKind.ASPECT]
        if self.category is not None:
            present.append(ElementKind.CATEGORY)
        if self.opinion is not None:
            present.append(ElementKind.OPINION)
        present.append(ElementKind.POLARITY)
        return tuple(present)

    def key(self) -> tuple[str, ...]:
        """Normalized identity used for equality in parsing/voting/eval."""
        parts = [normalize_term(self.aspect), self.polarity]
        if self.category is not None:
            parts.append(normalize_term(self.category))
        if self.opinion is not None:
            parts.append(normalize_term(self.opinion))
        parts.append("".join(k.marker for k in self.kinds()))
        return tuple(parts)


@dataclass(frozen=True)
class ElementOrder:
    """A permutation of element kinds: both prompt suffix and target layout."""

    kinds: tuple[ElementKind, ...]

    def __post_init__(self) -> None:
        if len(set(self.kinds)) != len(self.kinds):
            raise SchemaError(f"repeated kinds in order {self.marker_string()}")

    def marker_string(self) -> str:
        return "".join(k.marker for k in self.kinds)

    def __len__(self) -> int:
        return len(self.kinds)

    @classmethod
    def from_marker_string(cls, text: str) -> "ElementOrder":
        markers = {k.marker: k for k in ElementKind}
        found = _MARKER_RE.findall(text.strip())
        if not found or "".join(found) != text.strip():
            raise SchemaError(f"not a marker string: {text!r}")
        try:
            kinds = tuple(markers[m] for m in found)
        except KeyError as exc:
            raise SchemaError(f"unknown marker {exc.args[0]} in {text!r}") from None
        return cls(kinds)


@dataclass
class ParseDiagnostics:
    """Malformed segments skipped while parsing a generated target."""

    skipped: list[tuple[str, str]] = field(default_factory=list)

    @property
    def skipped_count(self) -> int:
        return len(self.skipped)

    def record(self, segment: str, reason: str) -> None:
        self.skipped.append((segment, reason))


def paraphrase_element(kind: ElementKind, raw: str) -> str:
    """Map a canonical element value to its generation surface form.

    Polarity labels map to great/neutral/bad, implicit ``NULL`` aspect and
    opinion terms map to ``it``, category codes are lowercased with
    ``#``/``_`` turned into spaces; free-form terms pass through.
    """
    if kind is ElementKind.POLARITY:
        try:
            return POLARITY_SURFACE[raw]
        except KeyError:
            raise SchemaError(f"unknown polarity label {raw!r}") from None
    if kind in (ElementKind.ASPECT, ElementKind.OPINION) and raw == NULL_LABEL:
        return NULL_SURFACE
    if kind is ElementKind.CATEGORY:
        return _category_surface(raw)
    return raw


def canonicalize_element(kind: ElementKind, surface: str, task: TaskSpec | None = None) -> str:
    """Invert :func:`paraphrase_element`; total, passes unknown text through."""
    if kind is ElementKind.POLARITY:
        return SURFACE_POLARITY.get(surface, surface)
    if kind in (ElementKind.ASPECT, ElementKind.OPINION) and surface == NULL_SURFACE:
        return NULL_LABEL
    if kind is ElementKind.CATEGORY and task is not None:
        return _category_surface_map(task).get(normalize_term(surface), surface)
    return surface


def serialize_target(tuples: list[SentimentTuple] | tuple[SentimentTuple, ...], order: ElementOrder) -> str:
    """Render tuples as an ordered marker target, joined by ``[SSEP]``."""
    segments = []
    for t in tuples:
        if set(t.kinds()) != set(order.kinds):
            raise SchemaError(
                f"tuple elements {[k.marker for k in t.kinds()]} do not match order {order.marker_string()}"
            )
        parts = []
        for kind in order.kinds:
            parts.append(kind.marker)
            parts.append(paraphrase_element(kind, t.get(kind)))
        segments.append(" ".join(parts))
    return f" {SSEP} ".join(segments)


def parse_target(text: str, task: TaskSpec) -> tuple[list[SentimentTuple], ParseDiagnostics]:
    """Parse a generated target back into tuples.

    Total on strings: malformed segments (missing/duplicate/unknown
    markers, empty values, unknown polarity surfaces) are skipped and
    recorded in the diagnostics, never raised, so one bad view cannot
    abort aggregation.
    """
    diagnostics = ParseDiagnostics()
    tuples: list[SentimentTuple] = []
    if not text.strip():
        return tuples, diagnostics

    known = {k.marker: k for k in ElementKind}
    required = set(task.elements)

    for segment in text.split(SSEP):
        stripped = segment.strip()
        if not stripped:
            diagnostics.record(segment, "empty segment")
            continue
        matches = list(_MARKER_RE.finditer(segment))
        if not matches:
            diagnostics.record(segment, "no markers")
            continue
        if segment[: matches[0].start()].strip():
            diagnostics.record(segment, "text before first marker")
            continue
        values: dict[ElementKind, str] = {}
        bad = None
        for i, m in enumerate(matches):
            marker = m.group(0)
            kind = known.get(marker)
            if kind is None:
                bad = f"unknown marker {marker}"
                break
            if kind not in required:
                bad = f"unexpected marker {marker} for task {task.name}"
                break
            if kind in values:
                bad = f"duplicate marker {marker}"
                break
            end = matches[i + 1].start() if i + 1 < len(matches) else len(segment)
            value = collapse_ws(segment[m.end():end])
            if not value:
                bad = f"empty value for {marker}"
                break
            values[kind] = value
        if bad is None and set(values) != required:
            missing = sorted(k.marker for k in required - set(values))
            bad = f"missing {', '.join(missing)}"
        if bad is None and SURFACE_POLARITY.get(values[ElementKind.POLARITY]) is None:
            bad = f"unknown polarity surface {values[ElementKind.POLARITY]!r}"
        if bad is not None:
            diagnostics.record(segment, bad)
            continue
        tuples.append(
            SentimentTuple(
                aspect=canonicalize_element(ElementKind.ASPECT, values[ElementKind.ASPECT], task),
                polarity=canonicalize_element(ElementKind.POLARITY, values[ElementKind.POLARITY], task),
                category=(
                    canonicalize_element(ElementKind.CATEGORY, values[ElementKind.CATEGORY], task)
                    if ElementKind.CATEGORY in required
                    else None
                ),
                opinion=(
                    canonicalize_element(ElementKind.OPINION, values[ElementKind.OPINION], task)
                    if ElementKind.OPINION in required
                    else None
                ),
            )
        )
    return tuples, diagnostics


def build_input(sentence: str, order: ElementOrder, task_prefix: str | None = None) -> str:
    """Input text for one view: optional prefix, sentence, order prompt suffix."""
    prefix = task_prefix or ""
    return f"{prefix}{sentence} {order.marker_string()}"
