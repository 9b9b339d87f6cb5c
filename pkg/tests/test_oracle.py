import math
import random

import numpy as np
import pytest

import ctcstream as cs

from .helpers import make_alphabet, random_frames, random_lm


def frame(alphabet, **probs):
    """Frame from linear probabilities keyed by label char ('-' for blank)."""
    row = np.full(alphabet.size, cs.NEG_INF)
    for key, p in probs.items():
        idx = alphabet.blank_index if key == "-" else alphabet.index(key)
        row[idx] = math.log(p) if p > 0 else cs.NEG_INF
    return cs.PosteriorFrame(row)


def test_two_frame_hand_enumeration():
    alphabet = cs.Alphabet(["A"])
    lm = cs.NgramCharLm.uniform(alphabet)
    f = frame(alphabet, A=0.6, **{"-": 0.4})
    result = cs.oracle_decode([f, f], lm)
    a = (alphabet.index("A"),)
    # paths AA, A-, -A -> "A" (0.36 + 0.24 + 0.24); -- -> "" (0.16)
    assert result.ctc_logp(a) == pytest.approx(math.log(0.84), abs=1e-12)
    assert result.ctc_logp(()) == pytest.approx(math.log(0.16), abs=1e-12)
    # "AA" is unreachable in two frames (needs an intervening blank)
    assert set(result.sequences) == {a, ()}
    seq, score = cs.oracle_argmax(result)
    assert seq == a
    assert score == pytest.approx(math.log(0.84), abs=1e-12)


def test_single_blank_frame():
    alphabet = cs.Alphabet(["A"])
    lm = cs.NgramCharLm.uniform(alphabet)
    result = cs.oracle_decode([frame(alphabet, **{"-": 1.0})], lm)
    assert set(result.sequences) == {()}
    assert result.ctc_logp(()) == pytest.approx(0.0, abs=1e-12)
    seq, score = cs.oracle_argmax(result)
    assert seq == ()
    assert score == pytest.approx(0.0, abs=1e-12)


def test_insertion_penalty_flips_argmax():
    alphabet = cs.Alphabet(["A"])
    lm = cs.NgramCharLm.uniform(alphabet)
    f = frame(alphabet, A=0.6, **{"-": 0.4})
    result = cs.oracle_decode([f, f], lm, alpha=0.0, beta=-2.0)
    seq, score = cs.oracle_argmax(result)
    assert seq == ()
    assert score == pytest.approx(math.log(0.16), abs=1e-12)
    assert result.fused_score((0,)) == pytest.approx(math.log(0.84) - 2.0, abs=1e-12)


def test_total_probability_partition():
    rng = random.Random(17)
    alphabet = make_alphabet(2)
    for _ in range(10):
        frames = random_frames(alphabet, 5, rng)
        result = cs.oracle_decode(frames, cs.NgramCharLm.uniform(alphabet))
        total = math.fsum(math.exp(ctc) for ctc, _ in result.sequences.values())
        assert total == pytest.approx(1.0, abs=1e-9)


def test_fusion_matches_lm_chain():
    rng = random.Random(23)
    alphabet = make_alphabet(2, with_eos=True)
    lm = random_lm(alphabet, rng, order=2)
    frames = random_frames(alphabet, 4, rng)
    alpha, beta = 0.7, 1.5
    plain = cs.oracle_decode(frames, lm)
    fused = cs.oracle_decode(frames, lm, alpha=alpha, beta=beta)
    for seq, (ctc, _) in plain.sequences.items():
        expect = ctc + alpha * cs.score_sequence(lm, seq) + beta * len(seq)
        assert fused.fused_score(seq) == pytest.approx(expect, rel=1e-12, abs=1e-12)


def test_guard_rejects_huge_instances():
    alphabet = make_alphabet(9)  # |L'| = 10
    lm = cs.NgramCharLm.uniform(alphabet)
    frames = random_frames(alphabet, 8, random.Random(1))  # 10^8 paths
    with pytest.raises(cs.CtcStreamError):
        cs.oracle_decode(frames, lm)


def test_argmax_tie_rule_prefers_shorter_then_lexicographic():
    alphabet = cs.Alphabet(["A", "B"])
    lm = cs.NgramCharLm.uniform(alphabet)
    # one frame, A and B equally likely, no blank mass: "A" and "B" tie
    result = cs.oracle_decode([frame(alphabet, A=0.5, B=0.5)], lm)
    seq, _ = cs.oracle_argmax(result)
    assert seq == (alphabet.index("A"),)


def test_agreement_with_recursive_scorer():
    rng = random.Random(31)
    alphabet = make_alphabet(2)
    lin_cache = {}

    def recursive_score(frames, z):
        lin = [np.exp(f.logp).tolist() for f in frames]

        def rec(t, path):
            if t == len(frames):
                return 1.0 if cs.collapse(path, alphabet) == z else 0.0
            total = 0.0
            for i in range(alphabet.size):
                total += lin[t][i] * rec(t + 1, path + (i,))
            return total

        return rec(0, ())

    for _ in range(5):
        t = rng.randint(1, 4)
        frames = random_frames(alphabet, t, rng)
        result = cs.oracle_decode(frames, cs.NgramCharLm.uniform(alphabet))
        for seq, (ctc, _) in result.sequences.items():
            assert math.exp(ctc) == pytest.approx(recursive_score(frames, seq),
                                                  rel=1e-9)
