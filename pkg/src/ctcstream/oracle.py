"""Exhaustive ground-truth decoder for small instances.

Enumerates every frame-length path over L', collapses each one, and sums
path probabilities per label sequence in the linear domain with
compensated summation.  Deliberately shares nothing with the beam-search
decoder beyond the core types, so agreement between the two certifies the
decoder's incremental log-space computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .core import NEG_INF, CtcStreamError, LabelSequence, PosteriorFrame, collapse
from .charlm import CharLm

#: Refuse instances with more paths than this.
MAX_PATHS = 10_000_000


@dataclass(frozen=True)
class OracleResult:
    """Per-sequence scores for one decoded instance.

    ``sequences`` maps each reachable label sequence to its
    (ctc_logp, fused_score) pair; sequences with zero total path mass are
    absent.
    """

    sequences: dict[LabelSequence, tuple[float, float]]

    def ctc_logp(self, seq: LabelSequence) -> float:
        return self.sequences.get(tuple(seq), (NEG_INF, NEG_INF))[0]

    def fused_score(self, seq: LabelSequence) -> float:
        return self.sequences.get(tuple(seq), (NEG_INF, NEG_INF))[1]


def oracle_decode(
    frames: Sequence[PosteriorFrame],
    lm: CharLm,
    alpha: float = 0.0,
    beta: float = 0.0,
) -> OracleResult:
    """Score every label sequence reachable within ``len(frames)`` steps.

    For each sequence z the CTC log probability is the log of the explicit
    sum over all paths collapsing to z, and the fused score adds
    ``alpha * ln P_lm(z) + beta * |z|``.
    """
    alphabet = lm.alphabet
    size = alphabet.size
    t_total = len(frames)
    if size ** t_total > MAX_PATHS:
        raise CtcStreamError(
            f"instance too large: {size}^{t_total} paths exceeds {MAX_PATHS}"
        )
    for frame in frames:
        if len(frame) != size:
            raise CtcStreamError(
                f"frame has {len(frame)} entries, alphabet has {size}"
            )

    linear = [np.exp(frame.logp).tolist() for frame in frames]
    per_sequence: dict[LabelSequence, list[float]] = {}
    for path in product(range(size), repeat=t_total):
        p = 1.0
        for t, idx in enumerate(path):
            p *= linear[t][idx]
        z = collapse(path, alphabet)
        per_sequence.setdefault(z, []).append(p)

    sequences: dict[LabelSequence, tuple[float, float]] = {}
    for z, probs in per_sequence.items():
        total = math.fsum(probs)
        if total <= 0.0:
            continue
        ctc_logp = math.log(total)
        lm_logp = 0.0
        if alpha != 0.0 and z:
            ctx = lm.initial_context()
            terms = []
            for label in z:
                ctx, lp = lm.advance(ctx, label)
                terms.append(lp)
            lm_logp = math.fsum(terms)
        fused = ctc_logp + alpha * lm_logp + beta * len(z)
        sequences[z] = (ctc_logp, fused)
    return OracleResult(sequences)


def oracle_argmax(result: OracleResult) -> tuple[LabelSequence, float]:
    """Best sequence by fused score; ties prefer shorter, then lexicographically smaller."""
    if not result.sequences:
        raise CtcStreamError("oracle result is empty")
    best = min(
        result.sequences.items(),
        key=lambda kv: (-kv[1][1], len(kv[0]), kv[0]),
    )
    return best[0], best[1][1]
