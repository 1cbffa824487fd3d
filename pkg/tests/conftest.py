import itertools
import math

import numpy as np
import pytest

from wakespot.label_model import LabelAlphabet, Posteriorgram


def make_alphabet(num_labels: int) -> LabelAlphabet:
    return LabelAlphabet(tuple(f"L{i}" for i in range(num_labels)))


def random_posteriorgram(rng: np.random.Generator, num_frames: int, num_symbols: int) -> Posteriorgram:
    """Random row-stochastic posteriorgram via a Dirichlet draw per frame."""
    rows = rng.dirichlet(np.ones(num_symbols), size=num_frames) if num_frames else np.zeros((0, num_symbols))
    return Posteriorgram(rows, make_alphabet(num_symbols - 1))


def collapse(path):
    """Reference collapse: merge adjacent repeats, then drop blanks (index 0)."""
    out = []
    prev = None
    for sym in path:
        if sym != prev and sym != 0:
            out.append(sym)
        prev = sym
    return tuple(out)


def brute_force_sequence_probs(post: Posteriorgram) -> dict[tuple[int, ...], float]:
    """Enumerate all K^T alignments; sum linear-space probabilities per
    collapsed sequence. Independent of the forward recursion under test."""
    rows = post.rows.tolist()
    num_symbols = post.num_symbols
    probs: dict[tuple[int, ...], float] = {}
    for path in itertools.product(range(num_symbols), repeat=post.num_frames):
        p = 1.0
        for t, sym in enumerate(path):
            p *= rows[t][sym]
        key = collapse(path)
        probs[key] = probs.get(key, 0.0) + p
    return probs


def brute_force_logprob(post: Posteriorgram, labels) -> float:
    p = brute_force_sequence_probs(post).get(tuple(labels), 0.0)
    return math.log(p) if p > 0.0 else float("-inf")


@pytest.fixture(scope="session")
def oracle_model():
    from wakespot.synth import oracle_weights

    return oracle_weights()
