import io
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ctcstream as cs
from ctcstream.core import EOS_CHAR, NEG_INF

from .helpers import make_alphabet


# ----------------------------------------------------------------------
# log_sum_exp
# ----------------------------------------------------------------------

def test_lse_neg_inf_identity():
    assert cs.log_sum_exp(NEG_INF, -1.0) == -1.0
    assert cs.log_sum_exp(-1.0, NEG_INF) == -1.0
    assert cs.log_sum_exp(NEG_INF, NEG_INF) == NEG_INF


def test_lse_halves_sum_to_one():
    assert cs.log_sum_exp(math.log(0.5), math.log(0.5)) == pytest.approx(0.0, abs=1e-15)


def test_lse_direct_arithmetic():
    got = cs.log_sum_exp(math.log(0.36), math.log(0.24))
    assert got == pytest.approx(math.log(0.60), rel=1e-12)
    assert got == pytest.approx(-0.5108256237659907, abs=1e-12)


def test_lse_no_overflow_at_700():
    assert cs.log_sum_exp(700.0, 700.0) == pytest.approx(700.0 + math.log(2.0))
    assert cs.log_sum_exp(-700.0, -700.0) == pytest.approx(-700.0 + math.log(2.0))
    assert cs.log_sum_exp(700.0, -700.0) == pytest.approx(700.0)


@given(st.floats(min_value=-690, max_value=690),
       st.floats(min_value=-690, max_value=690))
def test_lse_commutative_and_linear_agreement(a, b):
    x, y = cs.log_sum_exp(a, b), cs.log_sum_exp(b, a)
    assert x == pytest.approx(y, abs=1e-12)
    expect = math.log(math.exp(a) + math.exp(b))
    assert x == pytest.approx(expect, rel=1e-12)


@given(st.floats(min_value=-300, max_value=300),
       st.floats(min_value=-300, max_value=300),
       st.floats(min_value=-300, max_value=300))
def test_lse_associative(a, b, c):
    left = cs.log_sum_exp(cs.log_sum_exp(a, b), c)
    right = cs.log_sum_exp(a, cs.log_sum_exp(b, c))
    assert left == pytest.approx(right, rel=1e-12, abs=1e-12)


def test_lse_many():
    assert cs.log_sum_exp_many([]) == NEG_INF
    assert cs.log_sum_exp_many([NEG_INF, math.log(0.3), math.log(0.7)]) == \
        pytest.approx(0.0, abs=1e-12)


# ----------------------------------------------------------------------
# collapse
# ----------------------------------------------------------------------

def _collapse_text(text: str, alphabet: cs.Alphabet) -> str:
    path = [alphabet.blank_index if c == "-" else alphabet.index(c) for c in text]
    return alphabet.text(cs.collapse(path, alphabet))


def test_collapse_paper_example():
    alphabet = cs.Alphabet(["a", "b", "c"])
    assert _collapse_text("aab-c--a", alphabet) == "abca"


def test_collapse_empty():
    alphabet = cs.Alphabet(["a"])
    assert cs.collapse([], alphabet) == ()


def test_collapse_blank_separated_repeats():
    alphabet = cs.Alphabet(["a"])
    assert _collapse_text("--a--a--", alphabet) == "aa"


def test_collapse_rejects_out_of_range():
    alphabet = cs.Alphabet(["a"])
    with pytest.raises(cs.InvalidLabelError):
        cs.collapse([0, 5], alphabet)
    with pytest.raises(cs.InvalidLabelError):
        cs.collapse([-1], alphabet)


def _naive_collapse(path, blank):
    # independent two-pass reducer: dedup consecutive, then drop blanks
    deduped = []
    for idx in path:
        if not deduped or deduped[-1] != idx:
            deduped.append(idx)
    return tuple(i for i in deduped if i != blank)


def test_collapse_agrees_with_naive_reducer_10k():
    rng = random.Random(7)
    for _ in range(10_000):
        n_labels = rng.randint(1, 4)
        alphabet = make_alphabet(n_labels)
        path = [rng.randrange(alphabet.size) for _ in range(rng.randint(0, 12))]
        assert cs.collapse(path, alphabet) == _naive_collapse(path, alphabet.blank_index)


def test_collapse_embed_roundtrip():
    rng = random.Random(11)
    for _ in range(500):
        alphabet = make_alphabet(rng.randint(1, 4))
        z = [rng.choice(alphabet.label_indices) for _ in range(rng.randint(0, 8))]
        embedded = []
        for i, lab in enumerate(z):
            if i:
                embedded.append(alphabet.blank_index)
            embedded.append(lab)
        assert cs.collapse(embedded, alphabet) == tuple(z)


def test_collapse_idempotent_on_collapsed():
    alphabet = cs.Alphabet(["a", "b"])
    seq = cs.collapse([0, 0, 2, 1, 2, 2, 0], alphabet)
    assert cs.collapse(seq, alphabet) == seq


# ----------------------------------------------------------------------
# Alphabet
# ----------------------------------------------------------------------

def test_alphabet_indexing_bijection():
    alphabet = cs.Alphabet(["A", "B", "C"], blank_index=1, eos_index=3)
    assert alphabet.size == 4
    assert alphabet.label_indices == (0, 2, 3)
    assert alphabet.char(0) == "A"
    assert alphabet.char(2) == "B"
    assert alphabet.char(3) == "C"
    assert [alphabet.index(c) for c in "ABC"] == [0, 2, 3]
    with pytest.raises(cs.InvalidLabelError):
        alphabet.char(1)  # blank has no character


def test_alphabet_rejects_duplicates_and_bad_eos():
    with pytest.raises(cs.InvalidLabelError):
        cs.Alphabet(["A", "A"])
    with pytest.raises(cs.InvalidLabelError):
        cs.Alphabet(["A"], eos_index=1)  # eos may not be the blank


def test_alphabet_encode_text_roundtrip():
    alphabet = make_alphabet(5)
    assert alphabet.text(alphabet.encode("ABEDC")) == "ABEDC"
    with pytest.raises(cs.InvalidLabelError):
        alphabet.encode("AZ")


def test_alphabet_token_roundtrip(tmp_path):
    alphabet = cs.Alphabet(["A", " ", EOS_CHAR, "B"], blank_index=2, eos_index=3)
    path = tmp_path / "alpha.txt"
    cs.write_alphabet(alphabet, path)
    assert cs.read_alphabet(path) == alphabet
    tokens = alphabet.to_tokens()
    assert tokens[1] == "<sp>"
    assert tokens[2] == "<blank>"
    assert tokens[3] == "<eos>"


def test_default_alphabet():
    alphabet = cs.default_alphabet()
    assert alphabet.size == 31
    assert alphabet.blank_index == 30
    assert alphabet.eos_index == 29
    assert alphabet.index("A") == 0
    assert alphabet.index(" ") == 26
    assert alphabet.index("'") == 27
    assert alphabet.index(".") == 28


def test_alphabet_file_requires_blank(tmp_path):
    path = tmp_path / "alpha.txt"
    path.write_text("A\nB\n")
    with pytest.raises(cs.FormatError):
        cs.read_alphabet(path)


# ----------------------------------------------------------------------
# PosteriorFrame and CPF-1 round trips
# ----------------------------------------------------------------------

def test_frame_rejects_non_finite():
    with pytest.raises(cs.FormatError):
        cs.PosteriorFrame(np.array([0.0, math.nan]))
    with pytest.raises(cs.FormatError):
        cs.PosteriorFrame(np.array([0.0, math.inf]))


def test_frame_normalization_check():
    frame = cs.PosteriorFrame(np.log([0.5, 0.25, 0.25]))
    frame.validate_normalized()
    scaled = cs.PosteriorFrame(frame.logp + math.log(1.2))
    with pytest.raises(cs.FormatError):
        scaled.validate_normalized()


def _roundtrip(frames, alphabet):
    buf = io.StringIO()
    cs.write_posterior_stream(frames, buf, alphabet)
    buf.seek(0)
    return list(cs.parse_posterior_stream(buf, alphabet))


def test_cpf_roundtrip_two_frames():
    alphabet = cs.Alphabet(["A", "B"])
    frames = [
        cs.PosteriorFrame(np.log([0.2, 0.3, 0.5])),
        cs.PosteriorFrame(np.array([0.0, NEG_INF, NEG_INF])),
    ]
    back = _roundtrip(frames, alphabet)
    assert len(back) == 2
    for orig, parsed in zip(frames, back):
        assert orig.logp.tolist() == parsed.logp.tolist()  # bit-exact


def test_cpf_roundtrip_random_100():
    rng = random.Random(3)
    alphabet = make_alphabet(4)
    frames = []
    for _ in range(100):
        row = [math.log(rng.random()) if rng.random() > 0.1 else NEG_INF
               for _ in range(alphabet.size)]
        frames.append(cs.PosteriorFrame(np.array(row)))
    back = _roundtrip(frames, alphabet)
    assert [f.logp.tolist() for f in back] == [f.logp.tolist() for f in frames]


def test_cpf_empty_stream_is_header_only():
    alphabet = cs.Alphabet(["A"])
    buf = io.StringIO()
    n = cs.write_posterior_stream([], buf, alphabet)
    assert n == 0
    assert buf.getvalue() == "cpf1 2 1\n"
    buf.seek(0)
    assert list(cs.parse_posterior_stream(buf, alphabet)) == []


def test_cpf_dimension_mismatch():
    alphabet30 = make_alphabet(29)
    alphabet31 = make_alphabet(30)
    buf = io.StringIO()
    cs.write_posterior_stream([], buf, alphabet31)
    buf.seek(0)
    with pytest.raises(cs.MismatchError):
        list(cs.parse_posterior_stream(buf, alphabet30))


def test_cpf_malformed_header():
    alphabet = cs.Alphabet(["A"])
    for text in ["", "cpf9 2 1\n", "cpf1 2\n", "cpf1 x y\n"]:
        with pytest.raises(cs.FormatError):
            list(cs.parse_posterior_stream(io.StringIO(text), alphabet))


def test_cpf_rejects_bad_values():
    alphabet = cs.Alphabet(["A"])
    with pytest.raises(cs.FormatError):
        list(cs.parse_posterior_stream(io.StringIO("cpf1 2 1\n0.0 nan\n"), alphabet))
    with pytest.raises(cs.FormatError):
        list(cs.parse_posterior_stream(io.StringIO("cpf1 2 1\n0.0 inf\n"), alphabet))
    with pytest.raises(cs.FormatError):
        list(cs.parse_posterior_stream(io.StringIO("cpf1 2 1\n0.0 abc\n"), alphabet))
    with pytest.raises(cs.MismatchError):
        list(cs.parse_posterior_stream(io.StringIO("cpf1 2 1\n0.0\n"), alphabet))


def test_cpf_strict_mode_rejects_unnormalized():
    alphabet = cs.Alphabet(["A"])
    ok = cs.PosteriorFrame(np.log([0.5, 0.5]))
    scaled = cs.PosteriorFrame(ok.logp + math.log(1.2))
    buf = io.StringIO()
    cs.write_posterior_stream([scaled], buf, alphabet)
    buf.seek(0)
    assert len(list(cs.parse_posterior_stream(buf, alphabet))) == 1  # lax mode accepts
    buf.seek(0)
    with pytest.raises(cs.FormatError):
        list(cs.parse_posterior_stream(buf, alphabet, strict=True))
    buf2 = io.StringIO()
    cs.write_posterior_stream([ok], buf2, alphabet)
    buf2.seek(0)
    assert len(list(cs.parse_posterior_stream(buf2, alphabet, strict=True))) == 1
