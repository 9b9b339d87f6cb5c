import random
import string

import numpy as np
import ctcstream as cs


_LABEL_POOL = string.ascii_uppercase + string.digits + string.ascii_lowercase


def make_alphabet(n_labels: int, with_eos: bool = False) -> cs.Alphabet:
    """Tiny alphabet over the first n_labels pool characters, blank last."""
    if n_labels > len(_LABEL_POOL):
        raise ValueError(f"at most {len(_LABEL_POOL)} labels supported")
    labels = list(_LABEL_POOL[:n_labels])
    eos_index = None
    if with_eos:
        labels.append(cs.core.EOS_CHAR)
        eos_index = n_labels
    return cs.Alphabet(labels, eos_index=eos_index)


def random_frames(alphabet: cs.Alphabet, t: int, rng: random.Random) -> list:
    """t normalized random frames with full support."""
    frames = []
    for _ in range(t):
        w = np.array([rng.random() + 1e-3 for _ in range(alphabet.size)])
        frames.append(cs.PosteriorFrame(np.log(w / w.sum())))
    return frames


def random_lm(alphabet: cs.Alphabet, rng: random.Random, order: int = 2) -> cs.NgramCharLm:
    """An order-n LM trained on a small random corpus over the alphabet."""
    chars = [alphabet.char(i) for i in alphabet.label_indices
             if i != alphabet.eos_index]
    lines = []
    for _ in range(rng.randint(3, 8)):
        lines.append("".join(rng.choice(chars) for _ in range(rng.randint(1, 6))))
    return cs.NgramCharLm.train("\n".join(lines), alphabet, order=order,
                                seed=rng.randint(0, 10**6))


def unpruned_config(alphabet: cs.Alphabet, t: int, alpha: float = 0.0,
                    beta: float = 0.0) -> cs.DecoderConfig:
    """A config wide and deep enough that nothing is ever pruned in t frames."""
    n_sequences = sum(alphabet.size ** k for k in range(t + 1))
    return cs.DecoderConfig(
        beam_width=max(4 * n_sequences, 16),
        beam_depth=max(t + 1, 1),
        alpha=alpha,
        beta=beta,
        depth_prune_interval=10 ** 9,
        emit_interval=10 ** 9,
        admission_margin=None,
    )


def run_decoder(alphabet, lm, config, frames) -> cs.Decoder:
    decoder = cs.Decoder(alphabet, lm, config)
    for frame in frames:
        decoder.step(frame)
    return decoder
