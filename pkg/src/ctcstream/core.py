"""Label alphabets, CTC path collapse, log-space arithmetic and posterior frame I/O.

Everything downstream (language models, the beam-search decoder, the
enumeration oracle) works with natural-log probabilities and with label
indices drawn from one :class:`Alphabet`.  Zero probability is represented
by the ``NEG_INF`` sentinel, which serializes to the literal token ``-inf``
in the file formats defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

NEG_INF = float("-inf")

#: A blank-free sequence of L' label indices.
LabelSequence = tuple[int, ...]

BLANK_TOKEN = "<blank>"
EOS_TOKEN = "<eos>"
SPACE_TOKEN = "<sp>"

#: Character used to render the end-of-sentence label in plain text.
EOS_CHAR = "\n"

_DEFAULT_ALPHABET_RESOURCE = "default_alphabet.txt"


class CtcStreamError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(CtcStreamError):
    """Malformed file content (bad header, bad token, non-finite value)."""


class MismatchError(CtcStreamError):
    """Inputs that disagree on dimensions or alphabets."""


class InvalidLabelError(CtcStreamError):
    """A label index or character outside the alphabet."""


def log_sum_exp(a: float, b: float) -> float:
    """Return ``ln(exp(a) + exp(b))`` without overflow; NEG_INF absorbs."""
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a >= b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def log_sum_exp_many(values: Iterable[float]) -> float:
    """logsumexp over an iterable of log values (NEG_INF for empty input)."""
    vals = [v for v in values if v != NEG_INF]
    if not vals:
        return NEG_INF
    m = max(vals)
    return m + math.log(math.fsum(math.exp(v - m) for v in vals))


class Alphabet:
    """The label set L plus the distinguished CTC blank (together L').

    Indices run over ``[0, size)`` where ``size == len(labels) + 1``; one
    index is reserved for the blank and the remaining slots hold the
    non-blank labels in order.

    Parameters
    ----------
    labels : sequence of str
        The non-blank labels, in L' index order (the blank slot is skipped).
        Labels must be distinct, non-empty strings.
    blank_index : int, optional
        L' index of the blank.  Defaults to ``len(labels)`` (last).
    eos_index : int, optional
        L' index of the end-of-sentence label, if the alphabet has one.
        Must refer to a non-blank label.
    """

    def __init__(
        self,
        labels: Sequence[str],
        blank_index: int | None = None,
        eos_index: int | None = None,
    ):
        labels = tuple(labels)
        if len(set(labels)) != len(labels):
            raise InvalidLabelError("alphabet labels must be distinct")
        if any(not lab for lab in labels):
            raise InvalidLabelError("alphabet labels must be non-empty strings")
        size = len(labels) + 1
        if blank_index is None:
            blank_index = len(labels)
        if not 0 <= blank_index < size:
            raise InvalidLabelError(f"blank_index {blank_index} out of range [0, {size})")

        chars: list[str | None] = [None] * size
        it = iter(labels)
        for i in range(size):
            if i != blank_index:
                chars[i] = next(it)

        if eos_index is not None:
            if not 0 <= eos_index < size or eos_index == blank_index:
                raise InvalidLabelError(f"eos_index {eos_index} is not a non-blank label index")

        self._labels = labels
        self._chars = chars
        self._index = {c: i for i, c in enumerate(chars) if c is not None}
        self.blank_index = blank_index
        self.eos_index = eos_index

    @property
    def size(self) -> int:
        """|L'|: number of labels including the blank."""
        return len(self._chars)

    @property
    def labels(self) -> tuple[str, ...]:
        """The non-blank labels in index order."""
        return self._labels

    @property
    def label_indices(self) -> tuple[int, ...]:
        """All non-blank L' indices, ascending."""
        return tuple(i for i in range(self.size) if i != self.blank_index)

    def char(self, index: int) -> str:
        """The label character at a non-blank L' index."""
        if not 0 <= index < self.size or index == self.blank_index:
            raise InvalidLabelError(f"index {index} is not a non-blank label index")
        return self._chars[index]  # type: ignore[return-value]

    def index(self, char: str) -> int:
        """The L' index of a label character."""
        try:
            return self._index[char]
        except KeyError:
            raise InvalidLabelError(f"character {char!r} not in alphabet") from None

    def __contains__(self, char: str) -> bool:
        return char in self._index

    def encode(self, text: str) -> LabelSequence:
        """Map text to label indices, raising on out-of-alphabet characters."""
        return tuple(self.index(c) for c in text)

    def text(self, seq: Iterable[int]) -> str:
        """Render a blank-free label sequence as a string."""
        return "".join(self.char(i) for i in seq)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Alphabet):
            return NotImplemented
        return (
            self._labels == other._labels
            and self.blank_index == other.blank_index
            and self.eos_index == other.eos_index
        )

    def __hash__(self) -> int:
        return hash((self._labels, self.blank_index, self.eos_index))

    def __repr__(self) -> str:
        return (
            f"Alphabet({len(self._labels)} labels, blank={self.blank_index}, "
            f"eos={self.eos_index})"
        )

    def to_tokens(self) -> list[str]:
        """Token lines of the alphabet file format, in index order."""
        tokens = []
        for i, c in enumerate(self._chars):
            if i == self.blank_index:
                tokens.append(BLANK_TOKEN)
            elif i == self.eos_index:
                tokens.append(EOS_TOKEN)
            elif c == " ":
                tokens.append(SPACE_TOKEN)
            else:
                tokens.append(c)
        return tokens

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Alphabet":
        """Build an alphabet from file-format tokens (line order gives indices)."""
        labels: list[str] = []
        blank_index: int | None = None
        eos_index: int | None = None
        for i, tok in enumerate(tokens):
            if tok == BLANK_TOKEN:
                if blank_index is not None:
                    raise FormatError("alphabet file declares more than one <blank>")
                blank_index = i
            elif tok == EOS_TOKEN:
                if eos_index is not None:
                    raise FormatError("alphabet file declares more than one <eos>")
                eos_index = i
                labels.append(EOS_CHAR)
            elif tok == SPACE_TOKEN:
                labels.append(" ")
            else:
                if len(tok) != 1:
                    raise FormatError(f"alphabet label {tok!r} is not a single character")
                labels.append(tok)
        if blank_index is None:
            raise FormatError("alphabet file declares no <blank> line")
        return cls(labels, blank_index=blank_index, eos_index=eos_index)


def read_alphabet(path: str | Path) -> Alphabet:
    """Load an alphabet file: one label per line, order defines indices."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return Alphabet.from_tokens([ln for ln in lines if ln != ""])


def write_alphabet(alphabet: Alphabet, path: str | Path) -> None:
    Path(path).write_text("\n".join(alphabet.to_tokens()) + "\n", encoding="utf-8")


def default_alphabet() -> Alphabet:
    """The stock 31-symbol inventory: A-Z, space, apostrophe, period, EOS, blank."""
    from importlib import resources

    ref = resources.files("ctcstream").joinpath("data", _DEFAULT_ALPHABET_RESOURCE)
    lines = ref.read_text(encoding="utf-8").splitlines()
    return Alphabet.from_tokens([ln for ln in lines if ln != ""])


def collapse(path: Sequence[int], alphabet: Alphabet) -> LabelSequence:
    """Reduce an L' path to its label sequence (exact CTC collapse).

    Repeated consecutive labels merge first, then blanks are removed, so
    e.g. ``aab-c--a`` (``-`` the blank) collapses to ``abca``.
    """
    size = alphabet.size
    blank = alphabet.blank_index
    out: list[int] = []
    prev = -1
    for idx in path:
        if not 0 <= idx < size:
            raise InvalidLabelError(f"path index {idx} out of range [0, {size})")
        if idx != prev and idx != blank:
            out.append(idx)
        prev = idx
    return tuple(out)


@dataclass(frozen=True)
class PosteriorFrame:
    """One time step's natural-log probability vector over L'."""

    logp: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.logp, dtype=np.float64)
        if arr.ndim != 1:
            raise FormatError("posterior frame must be a 1-D vector")
        if np.any(np.isnan(arr)) or np.any(arr == np.inf):
            raise FormatError("posterior frame contains non-finite values other than -inf")
        object.__setattr__(self, "logp", arr)

    def __len__(self) -> int:
        return len(self.logp)

    def log_norm(self) -> float:
        """logsumexp over the entries; 0 for a normalized distribution."""
        return log_sum_exp_many(self.logp.tolist())

    def validate_normalized(self, tol: float = 1e-6) -> None:
        norm = self.log_norm()
        if not abs(norm) <= tol:
            raise FormatError(f"posterior frame is not normalized (logsumexp = {norm:.6g})")


#: Lazily consumable sequence of posterior frames.
PosteriorStream = Iterable[PosteriorFrame]

_CPF_MAGIC = "cpf1"


def _open_text(source: str | Path | IO[str], mode: str):
    if isinstance(source, (str, Path)):
        return open(source, mode, encoding="utf-8"), True
    return source, False


def parse_posterior_stream(
    source: str | Path | IO[str],
    alphabet: Alphabet,
    strict: bool = False,
) -> Iterator[PosteriorFrame]:
    """Lazily parse a CPF-1 posterior file into frames.

    Parameters
    ----------
    source : path or text file object
        CPF-1 input: a header line ``cpf1 <num_labels_incl_blank>
        <blank_index>`` followed by one whitespace-separated row of
        natural-log probabilities per frame (``-inf`` encodes zero mass).
    alphabet : Alphabet
        Expected label inventory; the header must agree with it.
    strict : bool
        When true, every frame must be normalized to within 1e-6 in
        logsumexp.

    Yields
    ------
    PosteriorFrame
        Frames in file order.

    Raises
    ------
    FormatError
        On a malformed header, a bad float token, or (in strict mode) an
        unnormalized frame.
    MismatchError
        When the header dimensions disagree with the alphabet.
    """
    fh, owned = _open_text(source, "r")
    try:
        header = fh.readline()
        if not header:
            raise FormatError("empty posterior file (missing cpf1 header)")
        parts = header.split()
        if len(parts) != 3 or parts[0] != _CPF_MAGIC:
            raise FormatError(f"malformed cpf1 header: {header.strip()!r}")
        try:
            width, blank = int(parts[1]), int(parts[2])
        except ValueError:
            raise FormatError(f"malformed cpf1 header: {header.strip()!r}") from None
        if width != alphabet.size or blank != alphabet.blank_index:
            raise MismatchError(
                f"posterior file is {width}-wide with blank {blank}, alphabet "
                f"has {alphabet.size} labels with blank {alphabet.blank_index}"
            )
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            tokens = line.split()
            if len(tokens) != width:
                raise MismatchError(
                    f"line {lineno}: expected {width} values, found {len(tokens)}"
                )
            try:
                values = [float(t) for t in tokens]
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
            for v in values:
                if math.isnan(v) or v == math.inf:
                    raise FormatError(f"line {lineno}: non-finite value {v!r}")
            frame = PosteriorFrame(np.array(values, dtype=np.float64))
            if strict:
                try:
                    frame.validate_normalized()
                except FormatError as exc:
                    raise FormatError(f"line {lineno}: {exc}") from None
            yield frame
    finally:
        if owned:
            fh.close()


def write_posterior_stream(
    frames: PosteriorStream,
    sink: str | Path | IO[str],
    alphabet: Alphabet,
) -> int:
    """Write frames as CPF-1; returns the number of frames written.

    Floats are written with ``repr`` so that ``parse(write(x))``
    reproduces ``x`` bit-exactly.
    """
    fh, owned = _open_text(sink, "w")
    try:
        fh.write(f"{_CPF_MAGIC} {alphabet.size} {alphabet.blank_index}\n")
        count = 0
        for frame in frames:
            if len(frame) != alphabet.size:
                raise MismatchError(
                    f"frame has {len(frame)} entries, alphabet has {alphabet.size}"
                )
            fh.write(" ".join(repr(v) for v in frame.logp.tolist()))
            fh.write("\n")
            count += 1
        return count
    finally:
        if owned:
            fh.close()
