"""CTC forward scoring and prefix beam search over posteriorgrams.

All probability arithmetic is carried out in natural-log space; ``-inf``
represents probability zero. A label sequence is a tuple of alphabet
indices with the blank (index 0) excluded.

The forward scorer sums over every frame-level alignment that collapses
(merge adjacent repeats, then delete blanks) to the target sequence. It
keeps only the 2U+1 augmented-position probabilities of the current
timestep, so memory is independent of the audio length, and batch scoring
is a loop over the single-step update, making streaming and batch results
identical by construction.

The N-best decoder is a prefix beam search: candidate prefixes are merged
by collapsed identity with separate blank / non-blank path masses, and the
top ``beam_width`` prefixes survive each timestep. Surviving prefixes are
rescored with the exact forward algorithm before they are returned, so the
reported log probability of every entry is the true sequence probability
even when pruning discarded some of its alignment mass mid-search. No
language model or lexicon is involved. Ties are ordered shorter sequence
first, then lexicographically by label indices.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple

import numpy as np

from .label_model import BLANK_INDEX, Posteriorgram

NEG_INF = float("-inf")

LabelSequence = tuple[int, ...]


class ScoredSequence(NamedTuple):
    labels: LabelSequence
    logprob: float


def validate_labels(labels: Iterable[int], num_symbols: int) -> LabelSequence:
    """Normalize to a tuple and check indices are non-blank and in range."""
    seq = tuple(int(v) for v in labels)
    for v in seq:
        if v == BLANK_INDEX:
            raise ValueError("label sequences may not contain the blank index")
        if not 0 < v < num_symbols:
            raise ValueError(f"label index {v} out of range for K={num_symbols}")
    return seq


def _log_rows(rows: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(rows)


class CtcForwardScorer:
    """Incremental forward scorer for one label sequence.

    Holds the log forward probabilities of the 2U+1 blank-interleaved
    positions at the current timestep. ``step`` ingests one posterior row;
    ``finalize`` may be called at any time and does not disturb the state.
    """

    def __init__(self, labels: Iterable[int], num_symbols: int):
        self.labels = validate_labels(labels, num_symbols)
        self.num_symbols = num_symbols
        u = len(self.labels)
        # Augmented symbol sequence: blank, y1, blank, y2, ..., blank.
        self._symbols = np.zeros(2 * u + 1, dtype=np.intp)
        self._symbols[1::2] = self.labels
        # A skip transition into position s is allowed only for label
        # positions whose label differs from the one two slots back.
        self._can_skip = np.zeros(2 * u + 1, dtype=bool)
        for s in range(3, 2 * u + 1, 2):
            self._can_skip[s] = self._symbols[s] != self._symbols[s - 2]
        self._log_alpha = np.full(2 * u + 1, NEG_INF)
        self.steps = 0
        self.cell_updates = 0

    @property
    def num_state_cells(self) -> int:
        return self._log_alpha.size

    def state(self) -> np.ndarray:
        return self._log_alpha.copy()

    def step(self, row: np.ndarray) -> None:
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (self.num_symbols,):
            raise ValueError(
                f"posterior row has {row.shape} entries, scorer expects {self.num_symbols}"
            )
        emit = _log_rows(row)[self._symbols]
        if self.steps == 0:
            alpha = np.full(self._log_alpha.size, NEG_INF)
            alpha[0] = emit[0]
            if alpha.size > 1:
                alpha[1] = emit[1]
        else:
            prev = self._log_alpha
            stay_or_advance = np.logaddexp(prev, np.concatenate(([NEG_INF], prev[:-1])))
            skip = np.where(
                self._can_skip, np.concatenate(([NEG_INF, NEG_INF], prev[:-2])), NEG_INF
            )
            alpha = np.logaddexp(stay_or_advance, skip) + emit
        self._log_alpha = alpha
        self.steps += 1
        self.cell_updates += alpha.size

    def finalize(self) -> float:
        if self.steps == 0:
            return 0.0 if not self.labels else NEG_INF
        if not self.labels:
            return float(self._log_alpha[0])
        return float(np.logaddexp(self._log_alpha[-1], self._log_alpha[-2]))


def forward_logprob(post: Posteriorgram, labels: Iterable[int]) -> float:
    """Log probability that the audio's alignment collapses to ``labels``.

    Runs in O(U T) time and O(U) memory. Returns ``-inf`` when no valid
    alignment exists, e.g. when the sequence (with the blanks required
    between repeated labels) is longer than the audio.
    """
    scorer = CtcForwardScorer(labels, post.num_symbols)
    for row in post.rows:
        scorer.step(row)
    return scorer.finalize()


def nbest_sort_key(entry: ScoredSequence):
    return (-entry.logprob, len(entry.labels), entry.labels)


def _logaddexp(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def beam_search(post: Posteriorgram, beam_width: int) -> list[ScoredSequence]:
    """N-best label sequences by CTC prefix beam search.

    Returns at most ``beam_width`` entries sorted by descending log
    probability; each entry's log probability is computed with
    :func:`forward_logprob` on the same posteriorgram.
    """
    if beam_width < 1:
        raise ValueError("beam width must be >= 1")
    num_symbols = post.num_symbols
    # prefix -> (log mass of paths ending in blank, ending in non-blank)
    beams: dict[LabelSequence, tuple[float, float]] = {(): (0.0, NEG_INF)}
    for row in post.rows:
        logrow = [math.log(p) if p > 0.0 else NEG_INF for p in row]
        blank_lp = logrow[BLANK_INDEX]
        merged: dict[LabelSequence, list[float]] = {}

        def add(prefix, mass, ends_blank):
            if mass == NEG_INF:
                return
            entry = merged.get(prefix)
            if entry is None:
                entry = [NEG_INF, NEG_INF]
                merged[prefix] = entry
            idx = 0 if ends_blank else 1
            entry[idx] = _logaddexp(entry[idx], mass)

        for prefix, (p_blank, p_nonblank) in beams.items():
            total = _logaddexp(p_blank, p_nonblank)
            # Emit a blank: the prefix is unchanged and now ends in blank.
            add(prefix, total + blank_lp, ends_blank=True)
            last = prefix[-1] if prefix else None
            if last is not None:
                # Extend the current run of the final label: unchanged prefix.
                add(prefix, p_nonblank + logrow[last], ends_blank=False)
            for c in range(1, num_symbols):
                extended = prefix + (c,)
                if c == last:
                    # A repeated label needs a separating blank, so only
                    # blank-ending mass can start a new run of it.
                    add(extended, p_blank + logrow[c], ends_blank=False)
                else:
                    add(extended, total + logrow[c], ends_blank=False)

        ranked = sorted(
            merged.items(),
            key=lambda kv: (-_logaddexp(kv[1][0], kv[1][1]), len(kv[0]), kv[0]),
        )
        beams = {prefix: (masses[0], masses[1]) for prefix, masses in ranked[:beam_width]}

    results = [
        ScoredSequence(prefix, forward_logprob(post, prefix)) for prefix in beams
    ]
    results = [r for r in results if r.logprob > NEG_INF]
    results.sort(key=nbest_sort_key)
    return results


def greedy_decode(post: Posteriorgram) -> LabelSequence:
    """Argmax label per frame, then collapse. Equivalent to beam width 1 on
    peaky posteriorgrams."""
    path = post.rows.argmax(axis=1) if post.num_frames else np.zeros(0, dtype=int)
    return collapse_alignment(path)


def collapse_alignment(path: Iterable[int]) -> LabelSequence:
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for sym in path:
        sym = int(sym)
        if sym != prev and sym != BLANK_INDEX:
            out.append(sym)
        prev = sym
    return tuple(out)
