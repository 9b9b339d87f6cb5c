"""Error-rate and incremental-stability measurement.

CER/WER come from a minimal Levenshtein alignment with a deterministic
tie rule; stability metrics quantify how much a streaming decoder revises
its best hypothesis between emissions and how long characters wait before
entering the committed prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .core import FormatError
from .decoder import EmissionRecord


@dataclass(frozen=True)
class ErrorReport:
    """Counts from a minimal edit alignment of hypothesis against reference."""

    substitutions: int
    insertions: int
    deletions: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        """(S + I + D) / reference length; 0 for two empty sequences."""
        if self.ref_len == 0:
            return 0.0 if self.errors == 0 else math.inf
        return self.errors / self.ref_len


def edit_distance(ref: Sequence, hyp: Sequence) -> ErrorReport:
    """Unit-cost Levenshtein alignment with deterministic operation counts.

    On equal cost the alignment prefers substitution over insertion over
    deletion, which fixes the (S, I, D) split even though the total
    distance is what matters for the rate.
    """
    m, n = len(ref), len(hyp)
    # cell = (cost, subs, ins, dels)
    prev = [(j, 0, j, 0) for j in range(n + 1)]
    for i in range(1, m + 1):
        cur = [(i, 0, 0, i)]
        ref_sym = ref[i - 1]
        for j in range(1, n + 1):
            diag = prev[j - 1]
            if ref_sym == hyp[j - 1]:
                best = (diag[0], diag[1], diag[2], diag[3])
            else:
                best = (diag[0] + 1, diag[1] + 1, diag[2], diag[3])
            left = cur[j - 1]
            if left[0] + 1 < best[0]:
                best = (left[0] + 1, left[1], left[2] + 1, left[3])
            up = prev[j]
            if up[0] + 1 < best[0]:
                best = (up[0] + 1, up[1], up[2], up[3] + 1)
            cur.append(best)
        prev = cur
    cost, s, ins, dels = prev[n]
    assert cost == s + ins + dels
    return ErrorReport(s, ins, dels, m)


def score_transcript(ref: str, hyp: str, level: str = "char") -> ErrorReport:
    """CER (``level='char'``) or WER (``level='word'``) between two texts.

    Character level scores the raw character sequences including spaces;
    word level tokenizes on single spaces.
    """
    if level == "char":
        return edit_distance(ref, hyp)
    if level == "word":
        return edit_distance(
            [w for w in ref.split(" ") if w],
            [w for w in hyp.split(" ") if w],
        )
    raise ValueError(f"level must be 'char' or 'word', got {level!r}")


@dataclass(frozen=True)
class StabilityReport:
    """How stable a stream of emissions was.

    ``revisions[k]`` counts the characters of emission k's best full
    string contradicted by emission k+1 (length of the old string minus
    the common prefix with the new one).  ``commit_latencies`` holds, per
    committed character, the frames between its first appearance in the
    best hypothesis and its entry into the committed prefix.
    """

    revisions: tuple[int, ...]
    commit_latencies: tuple[int, ...]

    @property
    def total_revised(self) -> int:
        return sum(self.revisions)

    @property
    def mean_commit_latency(self) -> float:
        if not self.commit_latencies:
            return math.nan
        return sum(self.commit_latencies) / len(self.commit_latencies)


def _common_prefix_len(a: str, b: str) -> int:
    n = min(len(a), len(b))
    for i in range(n):
        if a[i] != b[i]:
            return i
    return n


def stability_from_emissions(emissions: Sequence[EmissionRecord]) -> StabilityReport:
    """Revision counts and commit latencies for one stream's emission log.

    Validates that frame indices increase and that committed prefixes are
    append-only, raising FormatError on a doctored log.
    """
    records = list(emissions)
    for a, b in zip(records, records[1:]):
        if b.frame <= a.frame:
            raise FormatError(
                f"emission frames out of order: {a.frame} then {b.frame}"
            )
        if not b.committed.startswith(a.committed):
            raise FormatError(
                f"committed prefix violation at frame {b.frame}: "
                f"{a.committed!r} is not a prefix of {b.committed!r}"
            )

    fulls = [r.best_text for r in records]
    revisions = tuple(
        len(prev) - _common_prefix_len(prev, cur)
        for prev, cur in zip(fulls, fulls[1:])
    )

    latencies: list[int] = []
    if records:
        final_committed = records[-1].committed
        for p in range(len(final_committed)):
            target = final_committed[: p + 1]
            appear = next(
                r.frame for r in records if r.best_text[: p + 1] == target
            )
            commit = next(
                r.frame for r in records if len(r.committed) > p
            )
            latencies.append(commit - appear)
    return StabilityReport(revisions, tuple(latencies))
