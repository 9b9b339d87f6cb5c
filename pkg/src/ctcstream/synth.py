"""Synthetic posterior-stream generation for end-to-end testing.

Stands in for an acoustic model: a transcript becomes a stream of peaked
per-frame distributions with controllable noise.  Each character gets a
fixed run of frames peaked on it, separated by blank-peaked runs, so the
transcript is always CTC-expressible (repeated characters never touch).

Noise has two effects, both driven by one seeded RNG: the peak holds
``peak_prob`` of the mass with the remainder scattered uniformly over the
other symbols, and occasionally a frame's peak lands on a random wrong
symbol entirely (a confusion).  The default confusion rate is
``(1 - peak_prob) ** 2``, so noiseless and near-noiseless settings stay
argmax-recoverable while heavier noise produces genuine recognition
errors.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import (
    NEG_INF,
    Alphabet,
    CtcStreamError,
    LabelSequence,
    PosteriorFrame,
    PosteriorStream,
    collapse,
)


@dataclass(frozen=True)
class SynthConfig:
    """Shape and noise of the generated stream.

    ``noise_eps`` is the probability mass scattered uniformly over wrong
    symbols; it defaults to ``1 - peak_prob`` and their sum must be 1.
    ``confusion_prob`` is the per-frame chance that the peak relocates to
    a random wrong symbol; it defaults to ``(1 - peak_prob) ** 2``.
    """

    frames_per_char: int = 4
    blank_run: int = 2
    peak_prob: float = 0.9
    noise_eps: float | None = None
    confusion_prob: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.frames_per_char < 1:
            raise CtcStreamError(f"frames_per_char must be >= 1, got {self.frames_per_char}")
        if self.blank_run < 1:
            raise CtcStreamError(f"blank_run must be >= 1, got {self.blank_run}")
        if not 0.0 < self.peak_prob <= 1.0:
            raise CtcStreamError(f"peak_prob must be in (0, 1], got {self.peak_prob}")
        if self.noise_eps is None:
            object.__setattr__(self, "noise_eps", 1.0 - self.peak_prob)
        if abs(self.peak_prob + self.noise_eps - 1.0) > 1e-9:
            raise CtcStreamError(
                f"peak_prob + noise_eps must equal 1, got {self.peak_prob + self.noise_eps}"
            )
        if self.confusion_prob is None:
            object.__setattr__(self, "confusion_prob", (1.0 - self.peak_prob) ** 2)
        if not 0.0 <= self.confusion_prob <= 1.0:
            raise CtcStreamError(f"confusion_prob must be in [0, 1], got {self.confusion_prob}")


def frame_count(text: str, config: SynthConfig) -> int:
    """Total frames synth_posteriors will emit for this text."""
    return config.blank_run + len(text) * (config.frames_per_char + config.blank_run)


def synth_posteriors(
    text: str,
    alphabet: Alphabet,
    config: SynthConfig = SynthConfig(),
) -> Iterator[PosteriorFrame]:
    """Generate frame posteriors for a transcript, lazily.

    Emits ``blank_run`` blank-peaked frames, then for each character
    ``frames_per_char`` frames peaked on it followed by ``blank_run``
    blank-peaked frames.  Deterministic given the config seed.
    """
    labels = alphabet.encode(text)  # raises on out-of-alphabet characters
    size = alphabet.size
    rng = random.Random(config.seed)

    peak = config.peak_prob
    scatter = config.noise_eps / (size - 1) if size > 1 else 0.0
    log_peak = math.log(peak)
    log_scatter = math.log(scatter) if scatter > 0.0 else NEG_INF
    confusion = config.confusion_prob

    plan: list[int] = [alphabet.blank_index] * config.blank_run
    for lab in labels:
        plan.extend([lab] * config.frames_per_char)
        plan.extend([alphabet.blank_index] * config.blank_run)

    for true_symbol in plan:
        dominant = true_symbol
        if confusion > 0.0 and rng.random() < confusion:
            other = rng.randrange(size - 1)
            dominant = other if other < true_symbol else other + 1
        logp = np.full(size, log_scatter)
        logp[dominant] = log_peak
        yield PosteriorFrame(logp)


def greedy_decode(frames: PosteriorStream, alphabet: Alphabet) -> LabelSequence:
    """Per-frame argmax followed by CTC collapse (the no-search baseline)."""
    path = [int(np.argmax(frame.logp)) for frame in frames]
    return collapse(path, alphabet)
