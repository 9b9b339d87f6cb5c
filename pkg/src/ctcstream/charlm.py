"""Stateful character-level language models.

The decoder only needs the small :class:`CharLm` contract: an initial
context, plus a pure ``advance`` that maps (context, label) to a successor
context and the label's log probability.  Contexts are opaque immutable
values, so copying a hypothesis is free and advancing one hypothesis can
never disturb a sibling.  The reference implementation is an interpolated
absolute-discounting character n-gram model; a recurrent model can be
plugged in later behind the same contract.
"""

from __future__ import annotations

import logging
import math
import random
from abc import ABC, abstractmethod
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .core import (
    EOS_CHAR,
    NEG_INF,
    Alphabet,
    CtcStreamError,
    FormatError,
    InvalidLabelError,
)

logger = logging.getLogger(__name__)

#: Opaque LM state; for the n-gram model, the last ``order - 1`` label indices.
LmContext = tuple[int, ...]

_NCLM_MAGIC = "nclm1"


class CharLm(ABC):
    """Behavioral contract for a character-level LM over an alphabet's non-blank labels.

    Implementations must treat contexts as immutable values: ``advance``
    and ``push`` return fresh contexts and never mutate their argument.
    """

    @property
    @abstractmethod
    def alphabet(self) -> Alphabet:
        """The label inventory; the blank never receives probability."""

    @abstractmethod
    def initial_context(self) -> LmContext:
        """Context equivalent to having just consumed EOS (sentence start)."""

    @abstractmethod
    def prob(self, ctx: LmContext, label: int) -> float:
        """Linear-domain P(label | ctx), strictly positive for every label."""

    @abstractmethod
    def push(self, ctx: LmContext, label: int) -> LmContext:
        """Successor context after consuming ``label``."""

    def advance(self, ctx: LmContext, label: int) -> tuple[LmContext, float]:
        """Consume one label: returns (successor context, ln P(label | ctx))."""
        return self.push(ctx, label), math.log(self.prob(ctx, label))

    def log_probs(self, ctx: LmContext) -> np.ndarray:
        """Full next-label distribution as ln-probs over L' (NEG_INF at blank)."""
        out = np.full(self.alphabet.size, NEG_INF)
        for c in self.alphabet.label_indices:
            out[c] = math.log(self.prob(ctx, c))
        return out

    def _check_label(self, label: int) -> None:
        if not 0 <= label < self.alphabet.size or label == self.alphabet.blank_index:
            raise InvalidLabelError(f"label {label} is not a non-blank label index")


class NgramCharLm(CharLm):
    """Character n-gram LM with interpolated absolute discounting.

    Every level k interpolates between the discounted maximum-likelihood
    estimate and the (k-1)-level distribution, bottoming out at the uniform
    distribution over the non-blank labels:

        P_k(c | h) = max(count(h·c) - d, 0) / count(h·)
                     + d * distinct(h) / count(h·) * P_{k-1}(c | suffix(h))

    where ``count(h·)`` sums the continuations of h and ``distinct(h)``
    counts them.  Unseen contexts pass the lower-order distribution through
    unchanged.  Every label therefore keeps strictly positive probability
    in every context.

    Parameters
    ----------
    alphabet : Alphabet
        Label inventory (the blank is excluded from the vocabulary).
    order : int
        Maximum n-gram length, >= 1.
    discount : float
        Absolute discount d in (0, 1).
    counts : dict, optional
        Raw k-gram counts, tuple of label indices -> int, for all
        k <= order.  ``None`` gives the untrained (uniform) model.
    """

    def __init__(
        self,
        alphabet: Alphabet,
        order: int,
        discount: float = 0.5,
        counts: dict[tuple[int, ...], int] | None = None,
    ):
        if order < 1:
            raise CtcStreamError(f"n-gram order must be >= 1, got {order}")
        if not 0.0 < discount < 1.0:
            raise CtcStreamError(f"discount must be in (0, 1), got {discount}")
        self._alphabet = alphabet
        self.order = order
        self.discount = discount
        self.counts = dict(counts) if counts else {}
        self.dropped_characters = 0
        self._vocab = alphabet.label_indices
        self._rebuild_context_tables()

    def _rebuild_context_tables(self) -> None:
        # count(h·) and distinct(h), derived so they can never disagree
        # with the stored k-gram counts.
        totals: dict[tuple[int, ...], int] = {}
        distinct: dict[tuple[int, ...], int] = {}
        for gram, n in self.counts.items():
            if n <= 0:
                raise FormatError(f"k-gram {gram} has non-positive count {n}")
            h = gram[:-1]
            totals[h] = totals.get(h, 0) + n
            distinct[h] = distinct.get(h, 0) + 1
        self._ctx_total = totals
        self._ctx_distinct = distinct

    @property
    def alphabet(self) -> Alphabet:
        return self._alphabet

    def initial_context(self) -> LmContext:
        if self.order == 1 or self._alphabet.eos_index is None:
            return ()
        return (self._alphabet.eos_index,)

    def push(self, ctx: LmContext, label: int) -> LmContext:
        self._check_label(label)
        if self.order == 1:
            return ()
        return (ctx + (label,))[-(self.order - 1):]

    def prob(self, ctx: LmContext, label: int) -> float:
        self._check_label(label)
        p = 1.0 / len(self._vocab)
        history = ctx[-(self.order - 1):] if self.order > 1 else ()
        d = self.discount
        # Interpolate upward through suffix lengths 0 .. len(history).
        for k in range(len(history) + 1):
            h = history[len(history) - k:]
            total = self._ctx_total.get(h, 0)
            if total == 0:
                continue
            c = self.counts.get(h + (label,), 0)
            p = max(c - d, 0.0) / total + (d * self._ctx_distinct[h] / total) * p
        return p

    @classmethod
    def uniform(cls, alphabet: Alphabet) -> "NgramCharLm":
        """The untrained model: every label equally likely in every context."""
        return cls(alphabet, order=1)

    @classmethod
    def train(
        cls,
        corpus: str | Iterable[str],
        alphabet: Alphabet,
        order: int = 3,
        discount: float = 0.5,
        seed: int = 0,
    ) -> "NgramCharLm":
        """Train on a one-sentence-per-line corpus.

        The training stream is formed the way the decoder will see text at
        run time: sentences in seeded random order, joined by the EOS label,
        with one leading EOS so every sentence contributes a sentence-start
        count.  Characters outside the alphabet are dropped (the total lands
        in ``dropped_characters`` and a warning is logged).

        Deterministic given (corpus, seed).
        """
        sentences, dropped = _read_sentences(corpus, alphabet)
        if not sentences:
            raise CtcStreamError("empty corpus: no usable sentences")
        rng = random.Random(seed)
        rng.shuffle(sentences)

        eos = alphabet.eos_index
        tokens: list[int] = [eos] if eos is not None else []
        for sent in sentences:
            tokens.extend(sent)
            if eos is not None:
                tokens.append(eos)

        counts: dict[tuple[int, ...], int] = {}
        n_tokens = len(tokens)
        for i in range(n_tokens):
            top = min(order, n_tokens - i)
            for k in range(1, top + 1):
                gram = tuple(tokens[i:i + k])
                counts[gram] = counts.get(gram, 0) + 1

        model = cls(alphabet, order, discount, counts)
        model.dropped_characters = dropped
        if dropped:
            logger.warning("lm training dropped %d out-of-alphabet characters", dropped)
        return model

    def save(self, sink: str | Path | IO[str]) -> None:
        write_ngram_lm(self, sink)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NgramCharLm):
            return NotImplemented
        return (
            self._alphabet == other._alphabet
            and self.order == other.order
            and self.discount == other.discount
            and self.counts == other.counts
        )


def _read_sentences(
    corpus: str | Iterable[str], alphabet: Alphabet
) -> tuple[list[list[int]], int]:
    if isinstance(corpus, str):
        lines: Iterable[str] = corpus.splitlines()
    else:
        lines = corpus
    sentences: list[list[int]] = []
    dropped = 0
    for line in lines:
        line = line.rstrip("\n")
        if not line:
            continue
        sent: list[int] = []
        for ch in line:
            if ch in alphabet:
                sent.append(alphabet.index(ch))
            else:
                dropped += 1
        sentences.append(sent)
    return sentences, dropped


def score_sequence(lm: CharLm, labels: Iterable[int]) -> float:
    """Total ln P of a label sequence, advanced from the initial context."""
    ctx = lm.initial_context()
    terms = []
    for label in labels:
        ctx, lp = lm.advance(ctx, label)
        terms.append(lp)
    return math.fsum(terms)


def bits_per_character(lm: CharLm, heldout: str | Iterable[str]) -> float:
    """Average -log2 P per scored character, EOS scored at every line end.

    Perplexity is ``2 ** bpc``.  Raises when the held-out text is empty
    after filtering.
    """
    alphabet = lm.alphabet
    sentences, _ = _read_sentences(heldout, alphabet)
    eos = alphabet.eos_index
    ctx = lm.initial_context()
    bits: list[float] = []
    for sent in sentences:
        labels = list(sent)
        if eos is not None:
            labels.append(eos)
        for label in labels:
            bits.append(math.log2(lm.prob(ctx, label)))
            ctx = lm.push(ctx, label)
    if not bits:
        raise CtcStreamError("empty held-out set: nothing to score")
    return -math.fsum(bits) / len(bits)


def sample_text(
    lm: CharLm,
    max_chars: int,
    temperature: float = 1.0,
    seed: int = 0,
) -> str:
    """Draw ``max_chars`` labels from the LM; EOS renders as a line break.

    Each step samples from p^(1/temperature), renormalized.  Deterministic
    given the seed.
    """
    if max_chars < 1:
        raise CtcStreamError(f"max_chars must be >= 1, got {max_chars}")
    if not temperature > 0:
        raise CtcStreamError(f"temperature must be > 0, got {temperature}")
    alphabet = lm.alphabet
    vocab = alphabet.label_indices
    rng = random.Random(seed)
    ctx = lm.initial_context()
    out: list[str] = []
    for _ in range(max_chars):
        logp = lm.log_probs(ctx)
        scaled = np.array([logp[c] for c in vocab]) / temperature
        scaled -= scaled.max()
        weights = np.exp(scaled)
        weights /= weights.sum()
        r = rng.random()
        acc = 0.0
        label = vocab[-1]
        for c, w in zip(vocab, weights):
            acc += w
            if r < acc:
                label = c
                break
        out.append(EOS_CHAR if label == alphabet.eos_index else alphabet.char(label))
        ctx = lm.push(ctx, label)
    return "".join(out)


def write_ngram_lm(lm: NgramCharLm, sink: str | Path | IO[str]) -> None:
    """Serialize to the flat ``nclm1`` text format (stable byte-for-byte)."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            write_ngram_lm(lm, fh)
        return
    tokens = lm.alphabet.to_tokens()
    grams = sorted(lm.counts.items(), key=lambda kv: (len(kv[0]), kv[0]))
    sink.write(f"{_NCLM_MAGIC} {lm.order} {repr(lm.discount)} {len(tokens)} {len(grams)}\n")
    for tok in tokens:
        sink.write(tok + "\n")
    for gram, n in grams:
        sink.write(" ".join(str(i) for i in gram) + f" {n}\n")


def read_ngram_lm(source: str | Path | IO[str]) -> NgramCharLm:
    """Parse an ``nclm1`` model file."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_ngram_lm(fh)
    header = source.readline()
    parts = header.split()
    if len(parts) != 5 or parts[0] != _NCLM_MAGIC:
        raise FormatError(f"malformed nclm1 header: {header.strip()!r}")
    try:
        order = int(parts[1])
        discount = float(parts[2])
        n_tokens = int(parts[3])
        n_grams = int(parts[4])
    except ValueError:
        raise FormatError(f"malformed nclm1 header: {header.strip()!r}") from None
    tokens = []
    for _ in range(n_tokens):
        line = source.readline()
        if not line:
            raise FormatError("nclm1 file truncated in alphabet block")
        tokens.append(line.rstrip("\n"))
    alphabet = Alphabet.from_tokens(tokens)
    counts: dict[tuple[int, ...], int] = {}
    for _ in range(n_grams):
        line = source.readline()
        if not line:
            raise FormatError("nclm1 file truncated in count block")
        fields = line.split()
        if len(fields) < 2:
            raise FormatError(f"malformed nclm1 count line: {line.strip()!r}")
        try:
            gram = tuple(int(f) for f in fields[:-1])
            n = int(fields[-1])
        except ValueError:
            raise FormatError(f"malformed nclm1 count line: {line.strip()!r}") from None
        if len(gram) > order:
            raise FormatError(f"k-gram longer than order {order}: {gram}")
        for idx in gram:
            if not 0 <= idx < alphabet.size or idx == alphabet.blank_index:
                raise FormatError(f"k-gram contains invalid label index {idx}")
        counts[gram] = n
    return NgramCharLm(alphabet, order, discount, counts)
