"""Tree-based online CTC beam search with shallow LM fusion and two-stage pruning.

Hypotheses live in a prefix tree: one node per distinct label sequence, so
all frame-level paths that collapse to the same sequence are merged by
construction and their probabilities add.  Each node carries two log
masses, one for paths currently ending in the node's own label and one for
paths ending in a trailing blank.  A transition from a node's blank state
is required before the same label can be emitted again, which is exactly
the CTC rule that separates repeated characters.

Scores are fused: every unit of mass transferred from a parent into a
child is multiplied by ``exp(alpha * ln P_lm(c | prefix) + beta)``, cached
per node at creation time.  The total score of a sequence z therefore
factors as ``P_ctc(z | x) * P_lm(z)^alpha * e^(beta * |z|)``.

Two prunings keep the tree bounded on unbounded streams: width-pruning
keeps the top-N scoring nodes after every frame, and depth-pruning
periodically re-roots the tree at the M-th ancestor of the best node,
committing the labels above the new root as stable output that future
frames can no longer revise.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

from .core import (
    NEG_INF,
    Alphabet,
    FormatError,
    LabelSequence,
    MismatchError,
    PosteriorFrame,
)
from .charlm import CharLm, LmContext

#: Default admission margin: a child is only materialized when the mass
#: entering it is within ln(1e9) of the current best score.  Far looser
#: than any beam that survives width-pruning; None disables the threshold.
DEFAULT_ADMISSION_MARGIN = math.log(1e9)


@dataclass(frozen=True)
class DecoderConfig:
    """Beam search settings.

    ``beam_width`` is the number of hypothesis nodes kept per frame,
    ``beam_depth`` the distance retained behind the best hypothesis when
    re-rooting.  ``alpha`` weights the LM log probability and ``beta`` is
    the per-character insertion bonus.
    """

    beam_width: int = 128
    beam_depth: int = 50
    alpha: float = 0.0
    beta: float = 0.0
    depth_prune_interval: int = 20
    emit_interval: int = 50
    nbest: int = 1
    admission_margin: float | None = DEFAULT_ADMISSION_MARGIN

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")
        if self.beam_depth < 1:
            raise ValueError(f"beam_depth must be >= 1, got {self.beam_depth}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.depth_prune_interval < 1:
            raise ValueError(
                f"depth_prune_interval must be >= 1, got {self.depth_prune_interval}"
            )
        if self.emit_interval < 1:
            raise ValueError(f"emit_interval must be >= 1, got {self.emit_interval}")
        if not 1 <= self.nbest <= self.beam_width:
            raise ValueError(
                f"nbest must be in [1, beam_width], got {self.nbest}"
            )
        if self.admission_margin is not None and self.admission_margin <= 0:
            raise ValueError("admission_margin must be positive or None")


@dataclass(frozen=True)
class EmissionRecord:
    """One incremental result: committed prefix plus the current N-best suffixes.

    ``nbest`` holds (pending suffix, total fused score) pairs, best first;
    a full hypothesis string is ``committed + suffix``.
    """

    frame: int
    committed: str
    nbest: tuple[tuple[str, float], ...]

    @property
    def best_text(self) -> str:
        if not self.nbest:
            return self.committed
        return self.committed + self.nbest[0][0]


def _lse(a: float, b: float, _log1p=math.log1p, _exp=math.exp) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    d = a - b
    if d >= 0.0:
        return a + _log1p(_exp(-d))
    return b + _log1p(_exp(d))


class _Node:
    """One label node; holds the two CTC-state log masses and the LM context."""

    __slots__ = (
        "label", "parent", "children", "p_b", "p_nb", "lm_ctx", "fused_bonus",
        "depth", "stage_b", "stage_nb", "staged", "spawn_cache",
    )

    def __init__(self, label, parent, lm_ctx, fused_bonus, depth):
        self.label: int | None = label
        self.parent: _Node | None = parent
        self.children: dict[int, _Node] = {}
        self.p_b = NEG_INF
        self.p_nb = NEG_INF
        self.lm_ctx = lm_ctx
        self.fused_bonus = fused_bonus
        self.depth = depth  # absolute; never rewritten on re-rooting
        self.stage_b = NEG_INF
        self.stage_nb = NEG_INF
        self.staged = False
        # label -> (child lm context, fused bonus); the parent context is
        # immutable, so entries stay valid for the node's whole lifetime
        self.spawn_cache: dict[int, tuple] | None = None

    @property
    def score(self) -> float:
        return _lse(self.p_b, self.p_nb)


class Decoder:
    """Streaming CTC beam-search decoder over one posterior stream.

    A single-writer state machine: ``step``/``prune_depth``/``emit`` must
    be serialized, but the LM is only read, so any number of decoders can
    share one LM.

    Parameters
    ----------
    alphabet : Alphabet
        Label inventory including the blank.
    lm : CharLm
        Language model over the same alphabet; contexts are copied down
        the tree so every hypothesis owns its own history.
    config : DecoderConfig
    """

    def __init__(self, alphabet: Alphabet, lm: CharLm, config: DecoderConfig):
        if lm.alphabet != alphabet:
            raise MismatchError("lm alphabet does not match decoder alphabet")
        self.alphabet = alphabet
        self.lm = lm
        self.config = config
        self.frame_count = 0
        self._labels = alphabet.label_indices
        self._blank = alphabet.blank_index
        self._committed: list[int] = []
        self._root = _Node(None, None, lm.initial_context(), 0.0, 0)
        self._root.p_b = 0.0  # ln 1: all mass starts as the empty hypothesis
        self._active: list[_Node] = [self._root]
        self._frames_since_depth_prune = 0

    # ------------------------------------------------------------------
    # stepping
    # ------------------------------------------------------------------

    def step(self, frame: PosteriorFrame) -> None:
        """Consume one posterior frame and advance every hypothesis.

        For a node u with label c and parent v (primed values are the
        previous frame's):

            p_b(u)  = lse(p_b'(u), p_nb'(u)) + y[blank]
            p_nb(u) = lse(p_nb'(u) + y[c],
                          entry(v, c) + y[c] + fused_bonus(u))

        where entry(v, c) is p_b'(v) when v carries the same label c
        (repeated labels must pass through the blank state) and
        lse(p_b'(v), p_nb'(v)) otherwise.  Children are materialized
        lazily for labels whose entry mass clears the admission margin.
        Width-pruning runs after mass propagation, depth-pruning on its
        own frame cadence.
        """
        y = frame.logp
        if len(y) != self.alphabet.size:
            raise MismatchError(
                f"frame has {len(y)} entries, alphabet has {self.alphabet.size}"
            )
        y = y.tolist()
        y_blank = y[self._blank]
        cfg = self.config
        alpha, beta = cfg.alpha, cfg.beta
        lm = self.lm
        n_beam = cfg.beam_width

        prev_active = self._active
        if cfg.admission_margin is None or not prev_active:
            cut = NEG_INF
        else:
            cut = prev_active[0].score - cfg.admission_margin

        touched: list[_Node] = []
        # Lower bounds on staged candidates' final scores.  Once n_beam
        # candidates are staged, anything below the floor is guaranteed to
        # be zeroed by this frame's width-pruning, so it need not be staged
        # at all; skipping it is exact.
        heap: list[float] = []
        floor = NEG_INF

        def stage(node: _Node, score: float) -> None:
            nonlocal floor
            node.staged = True
            touched.append(node)
            if len(heap) < n_beam:
                heapq.heappush(heap, score)
                if len(heap) == n_beam:
                    floor = heap[0]
            elif score > floor:
                heapq.heapreplace(heap, score)
                floor = heap[0]

        # pass 1: every live node's own-state update
        for node in prev_active:
            pb0 = node.p_b
            pnb0 = node.p_nb
            tot0 = _lse(pb0, pnb0)
            label = node.label
            b_new = tot0 + y_blank
            if label is not None and pnb0 != NEG_INF:
                nb_new = pnb0 + y[label]
            else:
                nb_new = NEG_INF
            stage(node, _lse(b_new, nb_new))
            node.stage_b = b_new
            node.stage_nb = nb_new

        # pass 2: mass entering children, materializing them as needed
        for node in prev_active:
            pb0 = node.p_b
            pnb0 = node.p_nb
            tot0 = _lse(pb0, pnb0)
            label = node.label
            children = node.children

            for c, child in children.items():
                entry = pb0 if c == label else tot0
                if entry == NEG_INF:
                    continue
                contrib = entry + y[c] + child.fused_bonus
                if contrib == NEG_INF:
                    continue
                if child.staged:
                    child.stage_nb = _lse(child.stage_nb, contrib)
                elif contrib >= floor:
                    stage(child, contrib)
                    child.stage_b = NEG_INF
                    child.stage_nb = contrib

            # new children (entry <= tot0 for every label, so a parent below
            # the admission cut cannot admit anything)
            if tot0 < cut:
                continue
            cache = node.spawn_cache
            if cache is None:
                cache = node.spawn_cache = {}
            ndepth = node.depth + 1
            for c in self._labels:
                if c in children:
                    continue
                entry = pb0 if c == label else tot0
                if entry == NEG_INF or entry < cut:
                    continue
                yc = y[c]
                if yc == NEG_INF:
                    continue
                cached = cache.get(c)
                if cached is None:
                    new_ctx, lp = lm.advance(node.lm_ctx, c)
                    cached = (new_ctx, alpha * lp + beta)
                    cache[c] = cached
                contrib = entry + yc + cached[1]
                if contrib == NEG_INF or contrib < floor:
                    continue
                child = _Node(c, node, cached[0], cached[1], ndepth)
                children[c] = child
                stage(child, contrib)
                child.stage_nb = contrib

        survivors: list[_Node] = []
        for node in touched:
            node.p_b = node.stage_b
            node.p_nb = node.stage_nb
            node.staged = False
            if node.p_b != NEG_INF or node.p_nb != NEG_INF:
                survivors.append(node)

        self.frame_count += 1
        self._width_prune(survivors)
        self._frames_since_depth_prune += 1
        if self._frames_since_depth_prune >= cfg.depth_prune_interval:
            self.prune_depth()

    # ------------------------------------------------------------------
    # pruning
    # ------------------------------------------------------------------

    def prune_width(self) -> None:
        """Keep only the top beam_width active nodes (normally run by step)."""
        self._width_prune(self._active)

    def _width_prune(self, candidates: list[_Node]) -> None:
        ranked = self._rank(candidates)
        n = self.config.beam_width
        for node in ranked[n:]:
            node.p_b = NEG_INF
            node.p_nb = NEG_INF
            self._reclaim(node)
        self._active = ranked[:n]

    def _reclaim(self, node: _Node) -> None:
        # free pruned leaves that no surviving hypothesis passes through
        while (
            node.parent is not None
            and not node.children
            and node.p_b == NEG_INF
            and node.p_nb == NEG_INF
        ):
            parent = node.parent
            del parent.children[node.label]
            node.parent = None
            node = parent

    def prune_depth(self) -> LabelSequence:
        """Re-root at the M-th ancestor of the best node; returns newly committed labels.

        Hypotheses outside the new root's subtree are discarded and their
        mass zeroed.  Nodes deeper than the beam depth survive untouched.
        """
        self._frames_since_depth_prune = 0
        if not self._active:
            return ()
        best = self._active[0]
        root = self._root
        if best.depth - root.depth <= self.config.beam_depth:
            return ()

        new_root = best
        for _ in range(self.config.beam_depth):
            new_root = new_root.parent

        labels: list[int] = []
        node = new_root
        while node is not root:
            labels.append(node.label)
            node = node.parent
        labels.reverse()
        self._committed.extend(labels)

        new_root.parent = None
        self._root = new_root

        kept: list[_Node] = []
        for node in self._active:
            a = node
            while a is not None and a.depth > new_root.depth:
                a = a.parent
            if a is new_root:
                kept.append(node)
            else:
                node.p_b = NEG_INF
                node.p_nb = NEG_INF
        self._active = kept
        return tuple(labels)

    # ------------------------------------------------------------------
    # ranking and read-out
    # ------------------------------------------------------------------

    def _path(self, node: _Node) -> LabelSequence:
        labels: list[int] = []
        root = self._root
        while node is not root:
            labels.append(node.label)
            node = node.parent
        labels.reverse()
        return tuple(labels)

    def _rank(self, nodes: list[_Node]) -> list[_Node]:
        # Descending score; exact score ties fall back to shorter-sequence
        # then lexicographically-smaller order.  Tie keys are only computed
        # for the tied runs, which keeps the per-frame sort cheap.
        scored = sorted(((n.score, n) for n in nodes), key=lambda t: -t[0])
        out: list[_Node] = []
        i = 0
        while i < len(scored):
            j = i + 1
            while j < len(scored) and scored[j][0] == scored[i][0]:
                j += 1
            if j - i == 1:
                out.append(scored[i][1])
            else:
                group = [t[1] for t in scored[i:j]]
                group.sort(key=lambda n: (n.depth, self._path(n)))
                out.extend(group)
            i = j
        return out

    @property
    def committed(self) -> LabelSequence:
        """Labels committed by depth-pruning so far (append-only)."""
        return tuple(self._committed)

    @property
    def committed_text(self) -> str:
        return self.alphabet.text(self._committed)

    def active_hypotheses(self) -> list[tuple[LabelSequence, float]]:
        """All live hypotheses as (full label sequence, fused score), ranked."""
        base = tuple(self._committed)
        return [(base + self._path(n), n.score) for n in self._active]

    def best_hypothesis(self) -> tuple[str, float]:
        """The current best full hypothesis and its fused score."""
        if not self._active:
            return self.committed_text, NEG_INF
        best = self._active[0]
        return self.committed_text + self.alphabet.text(self._path(best)), best.score

    def emit(self) -> EmissionRecord:
        """Snapshot the committed prefix and the N best pending suffixes."""
        nbest = tuple(
            (self.alphabet.text(self._path(n)), n.score)
            for n in self._active[: self.config.nbest]
        )
        return EmissionRecord(self.frame_count, self.committed_text, nbest)

    def node_count(self) -> int:
        """Number of nodes currently in the tree (structural, not just active)."""
        count = 0
        stack = [self._root]
        while stack:
            node = stack.pop()
            count += 1
            stack.extend(node.children.values())
        return count


def decode_stream(
    decoder: Decoder, frames: Iterable[PosteriorFrame]
) -> Iterator[EmissionRecord]:
    """Drive a decoder over a stream, yielding an emission every emit_interval frames.

    A final emission is produced at stream end unless one was already
    emitted at exactly the last frame.  Memory stays bounded by the
    decoder's pruning regardless of stream length.
    """
    interval = decoder.config.emit_interval
    last_emitted = -1
    for frame in frames:
        decoder.step(frame)
        if decoder.frame_count % interval == 0:
            last_emitted = decoder.frame_count
            yield decoder.emit()
    if last_emitted != decoder.frame_count:
        yield decoder.emit()


# ----------------------------------------------------------------------
# emission log format: one JSON object per line, fixed key order
# ----------------------------------------------------------------------

def format_emission(record: EmissionRecord) -> str:
    """Render one record as its canonical JSON line."""
    obj = {
        "frame": record.frame,
        "committed": record.committed,
        "nbest": [{"text": t, "score": s} for t, s in record.nbest],
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def parse_emission(line: str) -> EmissionRecord:
    try:
        obj = json.loads(line)
        return EmissionRecord(
            frame=int(obj["frame"]),
            committed=obj["committed"],
            nbest=tuple((e["text"], float(e["score"])) for e in obj["nbest"]),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed emission record: {line.strip()!r}") from exc


def write_emission_log(
    records: Iterable[EmissionRecord],
    sink: str | Path | IO[str],
    header: dict | None = None,
) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            write_emission_log(records, fh, header)
        return
    if header is not None:
        sink.write(json.dumps({"header": header}, ensure_ascii=False,
                              separators=(",", ":")) + "\n")
    for rec in records:
        sink.write(format_emission(rec) + "\n")


def read_emission_log(
    source: str | Path | IO[str],
) -> tuple[dict | None, list[EmissionRecord]]:
    """Parse an emission log; returns (header or None, records in order)."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_emission_log(fh)
    header: dict | None = None
    records: list[EmissionRecord] = []
    for i, line in enumerate(source):
        if not line.strip():
            continue
        if i == 0:
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise FormatError(f"malformed emission log line: {line.strip()!r}") from exc
            if isinstance(obj, dict) and "header" in obj:
                header = obj["header"]
                continue
        records.append(parse_emission(line))
    return header, records
