"""Generation/scoring backend interface and deterministic in-process mocks.

The engine never runs a model itself: scoring (conditional log-likelihood
of a target given an input) and constrained next-token choice are
delegated to a Backend.  Mock backends here make every pipeline stage
testable offline; the HTTP client for a real model lives in ``remote``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence


class BackendError(Exception):
    """Backend failure; ``retryable`` hints whether a retry could help."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class CapabilityError(BackendError):
    """An operation the backend declared unsupported was invoked."""

    def __init__(self, message: str):
        super().__init__(message, retryable=False)


@dataclass(frozen=True)
class Capabilities:
    supports_score: bool
    supports_generate: bool
    tokenizer_artifact: str | None = None


class Backend:
    """Abstract scoring/generation service.

    ``score`` returns the mean per-token log-likelihood of ``target``
    given ``input_text`` (higher = more probable); ``score_total``
    returns the unnormalized sum.  ``next_token`` picks one id from
    ``allowed_ids`` and reports its log-probability.
    """

    @property
    def capabilities(self) -> Capabilities:
        raise NotImplementedError

    def score(self, input_text: str, target_text: str) -> float:
        raise CapabilityError(f"{type(self).__name__} does not support score")

    def score_total(self, input_text: str, target_text: str) -> float:
        raise CapabilityError(f"{type(self).__name__} does not support score_total")

    def next_token(
        self, input_text: str, prefix_ids: Sequence[int], allowed_ids: Iterable[int]
    ) -> tuple[int, float]:
        raise CapabilityError(f"{type(self).__name__} does not support next_token")


def _stable_index(seed: int, key: str, n: int) -> int:
    digest = hashlib.sha256(f"{seed}|{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % n


def _stable_unit(seed: int, key: str) -> float:
    digest = hashlib.sha256(f"{seed}|{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[8:16], "big") / 2**64


def _pick(seed: int, input_text: str, prefix_ids: Sequence[int], allowed: list[int]) -> tuple[int, float]:
    if not allowed:
        raise BackendError("empty allowed_ids: constraint automaton produced no candidates")
    key = f"{input_text}|{','.join(map(str, prefix_ids))}|{','.join(map(str, allowed))}"
    chosen = allowed[_stable_index(seed, key, len(allowed))]
    return chosen, -math.log(len(allowed))


class TableBackend(Backend):
    """Explicit (input, target) -> score and (input, prefix) -> id tables.

    Lookups outside the declared score domain raise; next-token lookups
    fall back to a seeded uniform choice over the allowed ids, derived
    statelessly so results do not depend on call order or threads.
    """

    def __init__(
        self,
        score_table: dict[tuple[str, str], float] | None = None,
        next_table: dict[tuple[str, tuple[int, ...]], tuple[int, float]] | None = None,
        seed: int = 0,
        score_total_table: dict[tuple[str, str], float] | None = None,
        tokenizer_artifact: str | None = None,
    ):
        self._scores = dict(score_table) if score_table else None
        self._next = dict(next_table) if next_table else {}
        self._totals = dict(score_total_table) if score_total_table else None
        self._seed = seed
        self._artifact = tokenizer_artifact

    @property
    def capabilities(self) -> Capabilities:
        return Capabilities(
            supports_score=self._scores is not None,
            supports_generate=True,
            tokenizer_artifact=self._artifact,
        )

    def score(self, input_text: str, target_text: str) -> float:
        if self._scores is None:
            raise CapabilityError("TableBackend built without a score table")
        try:
            return self._scores[(input_text, target_text)]
        except KeyError:
            raise BackendError(f"no score entry for input={input_text!r} target={target_text!r}") from None

    def score_total(self, input_text: str, target_text: str) -> float:
        if self._totals is None:
            raise CapabilityError("TableBackend built without a score_total table")
        try:
            return self._totals[(input_text, target_text)]
        except KeyError:
            raise BackendError(f"no total entry for input={input_text!r} target={target_text!r}") from None

    def next_token(
        self, input_text: str, prefix_ids: Sequence[int], allowed_ids: Iterable[int]
    ) -> tuple[int, float]:
        allowed = sorted(set(allowed_ids))
        if not allowed:
            raise BackendError("empty allowed_ids: constraint automaton produced no candidates")
        entry = self._next.get((input_text, tuple(prefix_ids)))
        if entry is not None:
            token, logprob = entry
            return token, logprob
        return _pick(self._seed, input_text, prefix_ids, allowed)

    @classmethod
    def scripted(cls, tokenizer, mapping: dict[str, str | tuple[str, float]], seed: int = 0) -> "TableBackend":
        """Backend that deterministically emits a fixed target per input.

        ``mapping`` values are target texts, optionally paired with the
        per-token log-probability to report (defaults to 0.0, i.e. the
        backend is certain).
        """
        next_table: dict[tuple[str, tuple[int, ...]], tuple[int, float]] = {}
        for input_text, value in mapping.items():
            if isinstance(value, tuple):
                target_text, logprob = value
            else:
                target_text, logprob = value, 0.0
            ids = list(tokenizer.encode(target_text)) + [tokenizer.eos_id]
            for k, token in enumerate(ids):
                next_table[(input_text, tuple(ids[:k]))] = (token, logprob)
        return cls(next_table=next_table, seed=seed)


class UniformRandomBackend(Backend):
    """Seeded pseudo-random backend: uniform next-token choice over the
    allowed set and a deterministic hash-derived score per (input, target).

    Stateless by construction, so identical inputs give identical answers
    under any concurrency.
    """

    def __init__(self, seed: int = 0, tokenizer_artifact: str | None = None):
        self._seed = seed
        self._artifact = tokenizer_artifact

    @property
    def capabilities(self) -> Capabilities:
        return Capabilities(supports_score=True, supports_generate=True, tokenizer_artifact=self._artifact)

    def score(self, input_text: str, target_text: str) -> float:
        return -0.5 - _stable_unit(self._seed, f"score|{input_text}|{target_text}")

    def score_total(self, input_text: str, target_text: str) -> float:
        return self.score(input_text, target_text) * max(1, len(target_text.split()))

    def next_token(
        self, input_text: str, prefix_ids: Sequence[int], allowed_ids: Iterable[int]
    ) -> tuple[int, float]:
        allowed = sorted(set(allowed_ids))
        return _pick(self._seed, input_text, prefix_ids, allowed)
