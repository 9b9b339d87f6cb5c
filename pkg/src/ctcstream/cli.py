"""Command-line surface: decode, sweep, synth, lm-train/eval/sample, score, oracle, concat."""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
from pathlib import Path

from .core import (
    Alphabet,
    CtcStreamError,
    FormatError,
    InvalidLabelError,
    MismatchError,
    parse_posterior_stream,
    read_alphabet,
    write_posterior_stream,
)
from .charlm import NgramCharLm, bits_per_character, read_ngram_lm, sample_text, write_ngram_lm
from .decoder import Decoder, DecoderConfig, decode_stream, format_emission
from .metrics import score_transcript, stability_from_emissions
from .oracle import oracle_argmax, oracle_decode
from .synth import SynthConfig, synth_posteriors

SEED_ENV_VAR = "CTCSTREAM_SEED"


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CtcStreamError(f"{SEED_ENV_VAR} is not an integer: {env!r}") from None
    return 0


def _load_lm(path: str | None, alphabet: Alphabet) -> NgramCharLm:
    if path is None:
        return NgramCharLm.uniform(alphabet)
    lm = read_ngram_lm(path)
    if lm.alphabet != alphabet:
        raise MismatchError(f"lm file {path} was trained on a different alphabet")
    return lm


@contextlib.contextmanager
def _out_stream(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _decoder_config(args) -> DecoderConfig:
    return DecoderConfig(
        beam_width=args.beam_width,
        beam_depth=args.beam_depth,
        alpha=args.alpha,
        beta=args.beta,
        depth_prune_interval=args.prune_interval,
        emit_interval=args.emit_interval,
        nbest=args.nbest,
    )


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def cmd_decode(args) -> int:
    alphabet = read_alphabet(args.alphabet)
    lm = _load_lm(args.lm, alphabet)
    config = _decoder_config(args)
    decoder = Decoder(alphabet, lm, config)
    frames = parse_posterior_stream(args.input, alphabet, strict=args.strict)
    header = {
        "alphabet_size": alphabet.size,
        "blank_index": alphabet.blank_index,
        "beam_width": config.beam_width,
        "beam_depth": config.beam_depth,
        "alpha": config.alpha,
        "beta": config.beta,
        "prune_interval": config.depth_prune_interval,
        "emit_interval": config.emit_interval,
        "nbest": config.nbest,
    }
    with _out_stream(args.out) as out:
        out.write(json.dumps({"header": header}, ensure_ascii=False,
                             separators=(",", ":")) + "\n")
        for record in decode_stream(decoder, frames):
            out.write(format_emission(record) + "\n")
    return 0


def cmd_sweep(args) -> int:
    alphabet = read_alphabet(args.alphabet)
    lm = _load_lm(args.lm, alphabet)
    ref = _read_text(args.ref).rstrip("\n")
    widths = [int(w) for w in args.widths.split(",") if w]
    depths = [int(d) for d in args.depths.split(",") if d]
    if not widths or not depths:
        raise CtcStreamError("sweep grids must be non-empty")
    rows = []
    for width in widths:
        for depth in depths:
            config = DecoderConfig(
                beam_width=width,
                beam_depth=depth,
                alpha=args.alpha,
                beta=args.beta,
                depth_prune_interval=args.prune_interval,
                emit_interval=args.emit_interval,
                nbest=args.nbest,
            )
            decoder = Decoder(alphabet, lm, config)
            frames = parse_posterior_stream(args.input, alphabet, strict=args.strict)
            emissions = list(decode_stream(decoder, frames))
            hyp = emissions[-1].best_text
            cer = score_transcript(ref, hyp, "char").rate
            wer = score_transcript(ref, hyp, "word").rate
            latency = stability_from_emissions(emissions).mean_commit_latency
            rows.append((width, depth, cer, wer, latency))
    with _out_stream(args.out) as out:
        out.write("beam_width\tbeam_depth\tcer\twer\tmean_commit_latency\n")
        for width, depth, cer, wer, latency in rows:
            out.write(f"{width}\t{depth}\t{cer:.6f}\t{wer:.6f}\t{latency:.3f}\n")
    return 0


def cmd_synth(args) -> int:
    alphabet = read_alphabet(args.alphabet)
    if (args.text is None) == (args.text_file is None):
        raise CtcStreamError("exactly one of --text / --text-file is required")
    text = args.text if args.text is not None else _read_text(args.text_file).rstrip("\n")
    config = SynthConfig(
        frames_per_char=args.frames_per_char,
        blank_run=args.blank_run,
        peak_prob=args.peak_prob,
        confusion_prob=args.confusion_prob,
        seed=_resolve_seed(args.seed),
    )
    frames = synth_posteriors(text, alphabet, config)
    with _out_stream(args.out) as out:
        write_posterior_stream(frames, out, alphabet)
    return 0


def cmd_lm_train(args) -> int:
    alphabet = read_alphabet(args.alphabet)
    corpus = _read_text(args.corpus)
    lm = NgramCharLm.train(
        corpus,
        alphabet,
        order=args.order,
        discount=args.discount,
        seed=_resolve_seed(args.seed),
    )
    with _out_stream(args.out) as out:
        write_ngram_lm(lm, out)
    return 0


def cmd_lm_eval(args) -> int:
    lm = read_ngram_lm(args.model)
    bpc = bits_per_character(lm, _read_text(args.text))
    with _out_stream(args.out) as out:
        out.write(f"bpc\t{bpc:.6f}\n")
        out.write(f"perplexity\t{2.0 ** bpc:.6f}\n")
    return 0


def cmd_lm_sample(args) -> int:
    lm = read_ngram_lm(args.model)
    text = sample_text(
        lm,
        max_chars=args.max_chars,
        temperature=args.temperature,
        seed=_resolve_seed(args.seed),
    )
    with _out_stream(args.out) as out:
        out.write(text)
        if not text.endswith("\n"):
            out.write("\n")
    return 0


def cmd_score(args) -> int:
    ref = _read_text(args.ref).rstrip("\n")
    hyp = _read_text(args.hyp).rstrip("\n")
    levels = ["char", "word"] if args.level == "both" else [args.level]
    with _out_stream(args.out) as out:
        out.write("level\tsubstitutions\tinsertions\tdeletions\tref_len\trate\n")
        for level in levels:
            rep = score_transcript(ref, hyp, level)
            out.write(
                f"{level}\t{rep.substitutions}\t{rep.insertions}\t{rep.deletions}"
                f"\t{rep.ref_len}\t{rep.rate:.6f}\n"
            )
    return 0


def cmd_oracle(args) -> int:
    alphabet = read_alphabet(args.alphabet)
    lm = _load_lm(args.lm, alphabet)
    frames = list(parse_posterior_stream(args.input, alphabet, strict=args.strict))
    result = oracle_decode(frames, lm, alpha=args.alpha, beta=args.beta)
    best_seq, _ = oracle_argmax(result)
    ranked = sorted(
        result.sequences.items(),
        key=lambda kv: (-kv[1][1], len(kv[0]), kv[0]),
    )
    with _out_stream(args.out) as out:
        out.write("sequence\tctc_logp\tfused_score\n")
        for seq, (ctc_logp, fused) in ranked:
            rendered = json.dumps(alphabet.text(seq), ensure_ascii=False)
            out.write(f"{rendered}\t{ctc_logp!r}\t{fused!r}\n")
    assert ranked[0][0] == best_seq
    return 0


def cmd_concat(args) -> int:
    alphabet = read_alphabet(args.alphabet)

    def all_frames():
        for path in args.inputs:
            yield from parse_posterior_stream(path, alphabet, strict=args.strict)

    with _out_stream(args.out) as out:
        write_posterior_stream(all_frames(), out, alphabet)
    return 0


def _add_decoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beam-width", type=int, default=128)
    p.add_argument("--beam-depth", type=int, default=50)
    p.add_argument("--alpha", type=float, default=0.0, help="LM weight")
    p.add_argument("--beta", type=float, default=0.0, help="insertion bonus")
    p.add_argument("--prune-interval", type=int, default=20,
                   help="frames between depth-prunings")
    p.add_argument("--emit-interval", type=int, default=50,
                   help="frames between emissions")
    p.add_argument("--nbest", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctcstream",
        description="Streaming character-level CTC beam search toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="beam-search decode a posterior stream")
    p.add_argument("--input", required=True, help="CPF-1 posterior file")
    p.add_argument("--alphabet", required=True)
    p.add_argument("--lm", help="nclm1 model file (uniform LM when omitted)")
    p.add_argument("--strict", action="store_true", help="reject unnormalized frames")
    p.add_argument("--out")
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", help="grid of beam widths/depths with CER/WER/latency")
    p.add_argument("--input", required=True)
    p.add_argument("--alphabet", required=True)
    p.add_argument("--ref", required=True, help="reference transcript file")
    p.add_argument("--lm")
    p.add_argument("--widths", required=True, help="comma-separated beam widths")
    p.add_argument("--depths", required=True, help="comma-separated beam depths")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--prune-interval", type=int, default=20)
    p.add_argument("--emit-interval", type=int, default=50)
    p.add_argument("--nbest", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="synthesize a posterior stream from text")
    p.add_argument("--text")
    p.add_argument("--text-file")
    p.add_argument("--alphabet", required=True)
    p.add_argument("--out")
    p.add_argument("--frames-per-char", type=int, default=4)
    p.add_argument("--blank-run", type=int, default=2)
    p.add_argument("--peak-prob", type=float, default=0.9)
    p.add_argument("--confusion-prob", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("lm-train", help="train the n-gram character LM")
    p.add_argument("--corpus", required=True, help="one sentence per line")
    p.add_argument("--alphabet", required=True)
    p.add_argument("--out")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--discount", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_lm_train)

    p = sub.add_parser("lm-eval", help="bits-per-character on held-out text")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lm_eval)

    p = sub.add_parser("lm-sample", help="sample random text from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--max-chars", type=int, default=200)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lm_sample)

    p = sub.add_parser("score", help="CER/WER between reference and hypothesis files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--level", choices=["char", "word", "both"], default="both")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("oracle", help="exhaustive score table for a small stream")
    p.add_argument("--input", required=True)
    p.add_argument("--alphabet", required=True)
    p.add_argument("--lm")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("concat", help="concatenate CPF-1 streams frame-wise")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--alphabet", required=True)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_concat)

    return parser


def _error_class(exc: Exception) -> str:
    if isinstance(exc, FormatError):
        return "format"
    if isinstance(exc, MismatchError):
        return "mismatch"
    if isinstance(exc, InvalidLabelError):
        return "label"
    if isinstance(exc, OSError):
        return "io"
    return "invalid"


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CtcStreamError, OSError, ValueError) as exc:
        print(f"error: {_error_class(exc)}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
