"""Schema-constrained generation: a tokenizer-aware automaton plus driver.

At every step the automaton knows which marker scope is open and offers
the backend only the legal next token ids: marker continuations, value
candidates (input-sentence ids for aspect/opinion terms, phrase tries for
polarity and category), and, once a segment holds every element of the
view's order, the tuple separator or end-of-sequence.  Terminated
generations therefore always parse back into well-formed tuples.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .backend import Backend
from .schema import (
    ElementKind,
    ElementOrder,
    SSEP,
    TaskSpec,
    build_input,
    collapse_ws,
    paraphrase_element,
)
from .tokenizers import Tokenizer

FREE_KINDS = (ElementKind.ASPECT, ElementKind.OPINION)
FREE_TERM_CAP = 32
POLARITY_WORDS = ("great", "bad", "neutral")


class DecodingError(ValueError):
    """Automaton misuse: a token outside the allowed set was applied."""


class IdTrie:
    """Trie over token-id sequences (markers and closed-vocabulary phrases)."""

    root = 0

    def __init__(self):
        self._children: list[dict[int, int]] = [{}]
        self._terminal: list[bool] = [False]

    def insert(self, ids) -> None:
        node = self.root
        for token in ids:
            nxt = self._children[node].get(token)
            if nxt is None:
                nxt = len(self._children)
                self._children[node][token] = nxt
                self._children.append({})
                self._terminal.append(False)
            node = nxt
        self._terminal[node] = True

    def step(self, node: int, token: int) -> int:
        return self._children[node].get(token, -1)

    def children(self, node: int):
        return self._children[node].keys()

    def is_terminal(self, node: int) -> bool:
        return self._terminal[node]


@dataclass(frozen=True)
class ConstraintTables:
    """Per-sentence candidate tables driving the automaton."""

    input_ids: frozenset[int]
    term_tries: dict[ElementKind, IdTrie]
    marker_seqs: dict[str, tuple[int, ...]]
    eos_id: int
    free_term_cap: int = FREE_TERM_CAP


def build_constraints(sentence: str, task: TaskSpec, tokenizer: Tokenizer) -> ConstraintTables:
    """Encode the candidate lists for one input sentence.

    Aspect/opinion candidates are the sentence's token ids minus any id
    that can open a marker, so free terms can never spell a marker and
    terminated outputs always parse.
    """
    if not sentence.strip():
        raise ValueError("sentence must be non-empty")
    if ElementKind.CATEGORY in task.elements and not task.categories:
        raise ValueError(f"task {task.name} requires a category vocabulary for constrained decoding")

    marker_seqs: dict[str, tuple[int, ...]] = {}
    for text in [k.marker for k in task.elements] + [SSEP]:
        seq = tuple(tokenizer.encode(text))
        if not seq or collapse_ws(tokenizer.decode(seq)) != text:
            raise ValueError(f"tokenizer cannot represent marker {text!r}")
        marker_seqs[text] = seq

    opener_ids = {seq[0] for seq in marker_seqs.values()}
    input_ids = frozenset(tokenizer.encode(sentence)) - opener_ids - {tokenizer.eos_id}
    if not input_ids:
        raise ValueError("sentence provides no usable candidate tokens")

    term_tries: dict[ElementKind, IdTrie] = {}
    polarity = IdTrie()
    for word in POLARITY_WORDS:
        ids = tokenizer.encode(word)
        if not ids:
            raise ValueError(f"tokenizer cannot represent polarity word {word!r}")
        polarity.insert(ids)
    term_tries[ElementKind.POLARITY] = polarity

    if ElementKind.CATEGORY in task.elements:
        categories = IdTrie()
        for label in task.categories:
            phrase = paraphrase_element(ElementKind.CATEGORY, label)
            ids = tokenizer.encode(phrase)
            if not ids:
                raise ValueError(f"tokenizer cannot represent category {phrase!r}")
            categories.insert(ids)
        term_tries[ElementKind.CATEGORY] = categories

    return ConstraintTables(
        input_ids=input_ids,
        term_tries=term_tries,
        marker_seqs=marker_seqs,
        eos_id=tokenizer.eos_id,
    )


class Mode(Enum):
    EXPECT_MARKER = "expect-marker"
    IN_MARKER = "inside-marker"
    IN_TERM = "inside-term"
    DONE = "done"


@dataclass(frozen=True)
class DecoderState:
    """Position in the constraint automaton; a value owned by one loop."""

    order: ElementOrder
    tables: ConstraintTables
    mode: Mode = Mode.EXPECT_MARKER
    cursor: int = 0
    marker_seq: tuple[int, ...] = ()
    marker_pos: int = 0
    marker_resets: bool = False
    term_count: int = 0
    term_node: int = -1
    emitted: tuple[int, ...] = field(default_factory=tuple)

    @property
    def finished(self) -> bool:
        return self.mode is Mode.DONE

    def _kind(self) -> ElementKind:
        return self.order.kinds[self.cursor]

    def _closeable(self) -> bool:
        kind = self._kind()
        if kind in FREE_KINDS:
            return self.term_count >= 1
        return self.tables.term_tries[kind].is_terminal(self.term_node)

    def describe(self) -> str:
        return f"{self.mode.value} cursor={self.cursor} emitted={len(self.emitted)}"


def initial_state(order: ElementOrder, tables: ConstraintTables) -> DecoderState:
    return DecoderState(order=order, tables=tables)


def allowed_next(state: DecoderState) -> frozenset[int]:
    """Legal next token ids; never empty while end-of-sequence is reachable."""
    tables = state.tables
    if state.mode is Mode.DONE:
        return frozenset()
    if state.mode is Mode.EXPECT_MARKER:
        seq = tables.marker_seqs[state._kind().marker]
        return frozenset({seq[0]})
    if state.mode is Mode.IN_MARKER:
        return frozenset({state.marker_seq[state.marker_pos]})

    kind = state._kind()
    allowed: set[int] = set()
    if kind in FREE_KINDS:
        if state.term_count < tables.free_term_cap:
            allowed |= tables.input_ids
    else:
        allowed |= tables.term_tries[kind].children(state.term_node)
    if state._closeable():
        if state.cursor + 1 < len(state.order):
            next_marker = state.order.kinds[state.cursor + 1].marker
            allowed.add(tables.marker_seqs[next_marker][0])
        else:
            allowed.add(tables.marker_seqs[SSEP][0])
            allowed.add(tables.eos_id)
    return frozenset(allowed)


def _enter_marker(state: DecoderState, seq: tuple[int, ...], cursor: int, resets: bool, token: int) -> DecoderState:
    emitted = state.emitted + (token,)
    if len(seq) == 1:
        return _marker_complete(state, cursor, resets, emitted)
    return replace(
        state,
        mode=Mode.IN_MARKER,
        cursor=cursor,
        marker_seq=seq,
        marker_pos=1,
        marker_resets=resets,
        emitted=emitted,
    )


def _marker_complete(state: DecoderState, cursor: int, resets: bool, emitted: tuple[int, ...]) -> DecoderState:
    if resets:
        return replace(
            state,
            mode=Mode.EXPECT_MARKER,
            cursor=0,
            marker_seq=(),
            marker_pos=0,
            marker_resets=False,
            term_count=0,
            term_node=-1,
            emitted=emitted,
        )
    kind = state.order.kinds[cursor]
    node = state.tables.term_tries[kind].root if kind not in FREE_KINDS else -1
    return replace(
        state,
        mode=Mode.IN_TERM,
        cursor=cursor,
        marker_seq=(),
        marker_pos=0,
        marker_resets=False,
        term_count=0,
        term_node=node,
        emitted=emitted,
    )


def step(state: DecoderState, token: int) -> DecoderState:
    """Deterministic transition on one token; raises on disallowed tokens."""
    tables = state.tables
    if state.mode is Mode.DONE:
        raise DecodingError(f"token {token} after end-of-sequence ({state.describe()})")

    if state.mode is Mode.EXPECT_MARKER:
        seq = tables.marker_seqs[state._kind().marker]
        if token != seq[0]:
            raise DecodingError(f"token {token} not allowed in state {state.describe()}")
        return _enter_marker(state, seq, state.cursor, resets=False, token=token)

    if state.mode is Mode.IN_MARKER:
        if token != state.marker_seq[state.marker_pos]:
            raise DecodingError(f"token {token} not allowed in state {state.describe()}")
        emitted = state.emitted + (token,)
        if state.marker_pos + 1 == len(state.marker_seq):
            return _marker_complete(state, state.cursor, state.marker_resets, emitted)
        return replace(state, marker_pos=state.marker_pos + 1, emitted=emitted)

    # inside a term: closing interpretations take precedence over value tokens
    kind = state._kind()
    if state._closeable():
        last = state.cursor + 1 == len(state.order)
        if last:
            if token == tables.eos_id:
                return replace(state, mode=Mode.DONE, emitted=state.emitted + (token,))
            ssep = tables.marker_seqs[SSEP]
            if token == ssep[0]:
                return _enter_marker(state, ssep, state.cursor, resets=True, token=token)
        else:
            next_seq = tables.marker_seqs[state.order.kinds[state.cursor + 1].marker]
            if token == next_seq[0]:
                return _enter_marker(state, next_seq, state.cursor + 1, resets=False, token=token)
    if kind in FREE_KINDS:
        if token in tables.input_ids and state.term_count < tables.free_term_cap:
            return replace(state, term_count=state.term_count + 1, emitted=state.emitted + (token,))
    else:
        child = tables.term_tries[kind].step(state.term_node, token)
        if child >= 0:
            return replace(
                state, term_node=child, term_count=state.term_count + 1, emitted=state.emitted + (token,)
            )
    raise DecodingError(f"token {token} not allowed in state {state.describe()}")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    sequence_score: float
    truncated: bool
    token_ids: tuple[int, ...]


def constrained_generate(
    backend: Backend,
    sentence: str,
    order: ElementOrder,
    task: TaskSpec,
    tokenizer: Tokenizer,
    max_tokens: int = 256,
    task_prefix: str | None = None,
) -> GenerationResult:
    """Greedy constrained generation of one view.

    The backend picks each next token from the automaton's allowed set;
    generation stops at end-of-sequence or after ``max_tokens`` (returned
    with ``truncated=True``).  ``sequence_score`` is the mean log
    probability of the emitted tokens, end-of-sequence included.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    tables = build_constraints(sentence, task, tokenizer)
    input_text = build_input(sentence, order, task_prefix)
    state = initial_state(order, tables)
    total_logprob = 0.0
    while not state.finished and len(state.emitted) < max_tokens:
        allowed = allowed_next(state)
        token, logprob = backend.next_token(input_text, state.emitted, allowed)
        state = step(state, token)
        total_logprob += logprob
    return GenerationResult(
        text=tokenizer.decode(state.emitted),
        sequence_score=total_logprob / max(1, len(state.emitted)),
        truncated=not state.finished,
        token_ids=state.emitted,
    )
