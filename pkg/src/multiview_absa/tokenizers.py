"""Tokenizer interface and the vocabulary-artifact tokenizers.

The decoding automaton is tokenizer-agnostic: anything exposing
``encode``/``decode``/``eos_id``/``vocab_size`` works, including markers
that split into several ids.  Two self-contained implementations are
provided (word-level and character-level), both loadable from a JSON
vocabulary artifact, plus an optional adapter for third-party tokenizers
advertised by a remote backend as ``hf:<name>``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Protocol, Sequence, runtime_checkable

from .schema import (
    ElementKind,
    NULL_SURFACE,
    POLARITY_SURFACE,
    SSEP,
    TaskSpec,
    paraphrase_element,
)

UNK_PIECE = "<unk>"
EOS_PIECE = "</s>"


@runtime_checkable
class Tokenizer(Protocol):
    eos_id: int
    vocab_size: int

    def encode(self, text: str) -> list[int]: ...

    def decode(self, ids: Sequence[int]) -> str: ...


class WordTokenizer:
    """Whitespace-split tokenizer over a fixed piece vocabulary."""

    def __init__(self, pieces: Sequence[str]):
        self.pieces = list(pieces)
        if UNK_PIECE not in self.pieces:
            self.pieces.insert(0, UNK_PIECE)
        if EOS_PIECE not in self.pieces:
            self.pieces.insert(1, EOS_PIECE)
        self._ids = {p: i for i, p in enumerate(self.pieces)}
        self.unk_id = self._ids[UNK_PIECE]
        self.eos_id = self._ids[EOS_PIECE]

    @property
    def vocab_size(self) -> int:
        return len(self.pieces)

    def encode(self, text: str) -> list[int]:
        return [self._ids.get(piece, self.unk_id) for piece in text.split()]

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self.pieces[i] for i in ids if i != self.eos_id)


class CharTokenizer:
    """Character-level tokenizer; markers become multi-id sequences."""

    def __init__(self, alphabet: Iterable[str]):
        chars = sorted(set(alphabet))
        self.pieces = [UNK_PIECE, EOS_PIECE] + chars
        self._ids = {c: i + 2 for i, c in enumerate(chars)}
        self.unk_id = 0
        self.eos_id = 1

    @property
    def vocab_size(self) -> int:
        return len(self.pieces)

    def encode(self, text: str) -> list[int]:
        return [self._ids.get(c, self.unk_id) for c in text]

    def decode(self, ids: Sequence[int]) -> str:
        return "".join(self.pieces[i] for i in ids if i not in (self.eos_id, self.unk_id))


def save_vocab(tokenizer: WordTokenizer | CharTokenizer, path: str | Path) -> None:
    kind = "char" if isinstance(tokenizer, CharTokenizer) else "word"
    payload = {"type": kind, "pieces": tokenizer.pieces}
    Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=0), encoding="utf-8")


def load_vocab(path: str | Path) -> WordTokenizer | CharTokenizer:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    pieces = payload["pieces"]
    if payload.get("type") == "char":
        tok = CharTokenizer([p for p in pieces if p not in (UNK_PIECE, EOS_PIECE)])
    else:
        tok = WordTokenizer([p for p in pieces if p not in (UNK_PIECE, EOS_PIECE)])
    return tok


def schema_pieces(task: TaskSpec) -> list[str]:
    """Marker and closed-vocabulary pieces every tokenizer must cover."""
    pieces = [k.marker for k in ElementKind] + [SSEP, NULL_SURFACE]
    pieces += list(POLARITY_SURFACE.values())
    for category in task.categories:
        pieces += paraphrase_element(ElementKind.CATEGORY, category).split()
    return pieces


def word_tokenizer_for(sentences: Iterable[str], task: TaskSpec) -> WordTokenizer:
    """Deterministic word vocabulary covering a corpus plus the schema pieces."""
    words = sorted({w for s in sentences for w in s.split()})
    seen: dict[str, None] = {}
    for piece in schema_pieces(task) + words:
        seen.setdefault(piece, None)
    return WordTokenizer(list(seen))


def char_tokenizer_for(sentences: Iterable[str], task: TaskSpec) -> CharTokenizer:
    chars = set()
    for s in sentences:
        chars.update(s)
    for piece in schema_pieces(task):
        chars.update(piece)
    chars.add(" ")
    return CharTokenizer(chars)


def load_tokenizer_artifact(ref: str | Path) -> Tokenizer:
    """Resolve a tokenizer reference: a vocab JSON path or ``hf:<name>``."""
    ref = str(ref)
    if ref.startswith("hf:"):
        return HFTokenizerAdapter(ref[3:])
    return load_vocab(ref)


class HFTokenizerAdapter:
    """Adapter for Hugging Face tokenizers advertised by a model server.

    Imported lazily; only needed when driving a real model backend whose
    token ids must match its own tokenizer.
    """

    def __init__(self, name_or_path: str):
        try:
            from transformers import AutoTokenizer
        except ImportError as exc:  # pragma: no cover
            raise RuntimeError(
                "transformers is required for hf: tokenizer artifacts; pip install transformers"
            ) from exc
        self._tok = AutoTokenizer.from_pretrained(name_or_path)
        self.eos_id = self._tok.eos_token_id
        self.vocab_size = len(self._tok)

    def encode(self, text: str) -> list[int]:
        return self._tok.encode(text, add_special_tokens=False)

    def decode(self, ids: Sequence[int]) -> str:
        return self._tok.decode([i for i in ids if i != self.eos_id], skip_special_tokens=True)
