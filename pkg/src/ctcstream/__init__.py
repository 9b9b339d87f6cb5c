"""Streaming character-level CTC beam search with shallow n-gram LM fusion."""

from .core import (
    NEG_INF,
    Alphabet,
    CtcStreamError,
    FormatError,
    InvalidLabelError,
    LabelSequence,
    MismatchError,
    PosteriorFrame,
    PosteriorStream,
    collapse,
    default_alphabet,
    log_sum_exp,
    log_sum_exp_many,
    parse_posterior_stream,
    read_alphabet,
    write_alphabet,
    write_posterior_stream,
)
from .charlm import (
    CharLm,
    LmContext,
    NgramCharLm,
    bits_per_character,
    read_ngram_lm,
    sample_text,
    score_sequence,
    write_ngram_lm,
)
from .decoder import (
    Decoder,
    DecoderConfig,
    EmissionRecord,
    decode_stream,
    format_emission,
    parse_emission,
    read_emission_log,
    write_emission_log,
)
from .oracle import OracleResult, oracle_argmax, oracle_decode
from .synth import SynthConfig, frame_count, greedy_decode, synth_posteriors
from .metrics import (
    ErrorReport,
    StabilityReport,
    edit_distance,
    score_transcript,
    stability_from_emissions,
)

__version__ = "0.1.0"

__all__ = [
    "NEG_INF",
    "Alphabet",
    "CharLm",
    "CtcStreamError",
    "Decoder",
    "DecoderConfig",
    "EmissionRecord",
    "ErrorReport",
    "FormatError",
    "InvalidLabelError",
    "LabelSequence",
    "LmContext",
    "MismatchError",
    "NgramCharLm",
    "OracleResult",
    "PosteriorFrame",
    "PosteriorStream",
    "StabilityReport",
    "SynthConfig",
    "bits_per_character",
    "collapse",
    "decode_stream",
    "default_alphabet",
    "edit_distance",
    "format_emission",
    "frame_count",
    "greedy_decode",
    "log_sum_exp",
    "log_sum_exp_many",
    "oracle_argmax",
    "oracle_decode",
    "parse_emission",
    "parse_posterior_stream",
    "read_alphabet",
    "read_emission_log",
    "read_ngram_lm",
    "sample_text",
    "score_sequence",
    "score_transcript",
    "stability_from_emissions",
    "synth_posteriors",
    "write_alphabet",
    "write_emission_log",
    "write_ngram_lm",
    "write_posterior_stream",
]
