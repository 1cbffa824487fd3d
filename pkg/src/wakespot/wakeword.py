"""Wakeword enrollment and detection.

Enrollment runs the N-best decoder over each training recording's
posteriorgram and keeps the top N hypotheses per recording, converting each
enrollment log probability into a confidence weight ``w = -1 / log p``
(the log probability is clamped to -1e-6 first so a near-certain hypothesis
cannot produce an unbounded weight). Entries from different recordings are
all kept, including repeats of the same sequence.

Detection computes the forward log probability of every hypothesis on the
test posteriorgram and aggregates. The default aggregation is the
confidence-weighted sum; ``logsumexp`` aggregation treating the enrollment
log probabilities as log priors is available for comparison but tends to
behave like a max over hypotheses.

Model file format (human-readable text, one hypothesis per line):

    wakespot-model 1
    alphabet-sha256 <hex digest of the alphabet>
    beam-width <B>
    kept-per-example <N>
    threshold <float or "unset">
    <space-separated label symbols> TAB <weight> TAB <enrollment log prob>

A model may also be built directly from a provided label sequence
("query by string") with weight 1.
"""

from __future__ import annotations

import math
import warnings as _warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .audio import HOP_SAMPLES, SAMPLE_RATE, WINDOW_SAMPLES, frame_fbank
from .ctc import NEG_INF, CtcForwardScorer, beam_search, forward_logprob, validate_labels
from .errors import FileFormatError
from .label_model import GruWeights, LabelAlphabet, Posteriorgram, gru_step, init_state
from .vad import Vad, VadConfig

ENROLL_LOGPROB_CEILING = -1e-6

_MODEL_HEADER = "wakespot-model"
_MODEL_VERSION = 1

AGGREGATIONS = ("weighted_sum", "logsumexp_prior")


@dataclass(frozen=True)
class Hypothesis:
    labels: tuple[int, ...]
    enroll_logprob: float
    weight: float
    example: int = -1  # which training recording produced it; -1 if unknown

    def __post_init__(self):
        if not self.weight > 0.0 or not math.isfinite(self.weight):
            raise ValueError("hypothesis weight must be positive and finite")


def weight_from_logprob(enroll_logprob: float) -> float:
    """Confidence weight -1 / log p, with log p clamped below -1e-6."""
    return -1.0 / min(enroll_logprob, ENROLL_LOGPROB_CEILING)


@dataclass(frozen=True)
class WakewordModel:
    hypotheses: tuple[Hypothesis, ...]
    alphabet: LabelAlphabet
    beam_width: int
    kept_per_example: int
    threshold: float | None = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.hypotheses:
            raise ValueError("a wakeword model needs at least one hypothesis")

    def with_threshold(self, threshold: float) -> "WakewordModel":
        return replace(self, threshold=threshold)


def learn(
    posteriorgrams: Sequence[Posteriorgram],
    beam_width: int = 100,
    num_hypotheses: int = 10,
    threshold: float | None = None,
) -> WakewordModel:
    """Build a wakeword model from training posteriorgrams (three in the
    standard enrollment flow)."""
    if not posteriorgrams:
        raise ValueError("enrollment needs at least one posteriorgram")
    if num_hypotheses < 1:
        raise ValueError("must keep at least one hypothesis per example")
    if num_hypotheses > beam_width:
        raise ValueError(
            f"kept hypotheses ({num_hypotheses}) cannot exceed beam width ({beam_width})"
        )
    alphabet = posteriorgrams[0].alphabet
    hypotheses: list[Hypothesis] = []
    notes: list[str] = []
    for i, post in enumerate(posteriorgrams):
        if post.alphabet != alphabet:
            raise ValueError("training posteriorgrams use different alphabets")
        if post.num_frames == 0:
            raise ValueError(f"training posteriorgram {i} is empty")
        kept = beam_search(post, beam_width)[:num_hypotheses]
        if all(not entry.labels for entry in kept):
            notes.append(
                f"training example {i}: decoder produced only the empty sequence; "
                "the model may be degenerate"
            )
        for entry in kept:
            candidate = Hypothesis(
                labels=entry.labels,
                enroll_logprob=entry.logprob,
                weight=weight_from_logprob(entry.logprob),
                example=i,
            )
            if candidate not in hypotheses:  # identical (example, sequence, weight) only once
                hypotheses.append(candidate)
    for note in notes:
        _warnings.warn(note, stacklevel=2)
    return WakewordModel(
        hypotheses=tuple(hypotheses),
        alphabet=alphabet,
        beam_width=beam_width,
        kept_per_example=num_hypotheses,
        threshold=threshold,
        warnings=tuple(notes),
    )


def model_from_labels(
    symbols: Iterable[str],
    alphabet: LabelAlphabet,
    threshold: float | None = None,
) -> WakewordModel:
    """Query-by-string model: a single provided sequence with weight 1."""
    labels = tuple(alphabet.index_of(s) for s in symbols)
    validate_labels(labels, alphabet.size)
    hyp = Hypothesis(labels=labels, enroll_logprob=-1.0, weight=1.0)
    return WakewordModel(
        hypotheses=(hyp,),
        alphabet=alphabet,
        beam_width=1,
        kept_per_example=1,
        threshold=threshold,
    )


def _check_scoring_inputs(model: WakewordModel, post: Posteriorgram) -> None:
    if post.alphabet != model.alphabet:
        raise ValueError("posteriorgram alphabet does not match the wakeword model")


def score(model: WakewordModel, post: Posteriorgram) -> float:
    """Confidence-weighted sum of per-hypothesis forward log probabilities.

    A hypothesis with no valid alignment contributes -inf, which makes the
    whole score -inf; such audio simply fails any finite threshold.
    """
    _check_scoring_inputs(model, post)
    total = 0.0
    for hyp in model.hypotheses:
        total += hyp.weight * forward_logprob(post, hyp.labels)
    return total


def score_logsumexp_prior(model: WakewordModel, post: Posteriorgram) -> float:
    """logsumexp of (enrollment log prob + test log prob) over hypotheses."""
    _check_scoring_inputs(model, post)
    terms = np.array(
        [hyp.enroll_logprob + forward_logprob(post, hyp.labels) for hyp in model.hypotheses]
    )
    return float(np.logaddexp.reduce(terms))


@dataclass(frozen=True)
class ScoreStats:
    hypotheses: int
    cell_updates: int  # forward-state cells written across all hypotheses
    state_cells: int  # total live forward-state cells (2U+1 per hypothesis)


def score_with_stats(model: WakewordModel, post: Posteriorgram) -> tuple[float, ScoreStats]:
    """As :func:`score`, also reporting work and memory counters."""
    _check_scoring_inputs(model, post)
    scorers = [CtcForwardScorer(h.labels, post.num_symbols) for h in model.hypotheses]
    for row in post.rows:
        for scorer in scorers:
            scorer.step(row)
    total = sum(h.weight * s.finalize() for h, s in zip(model.hypotheses, scorers))
    stats = ScoreStats(
        hypotheses=len(scorers),
        cell_updates=sum(s.cell_updates for s in scorers),
        state_cells=sum(s.num_state_cells for s in scorers),
    )
    return total, stats


def save_model(path, model: WakewordModel) -> None:
    lines = [
        f"{_MODEL_HEADER} {_MODEL_VERSION}",
        f"alphabet-sha256 {model.alphabet.content_hash()}",
        f"beam-width {model.beam_width}",
        f"kept-per-example {model.kept_per_example}",
        f"threshold {'unset' if model.threshold is None else repr(model.threshold)}",
    ]
    for hyp in model.hypotheses:
        symbols = " ".join(model.alphabet.symbol_of(i) for i in hyp.labels)
        lines.append(f"{symbols}\t{hyp.weight!r}\t{hyp.enroll_logprob!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path, alphabet: LabelAlphabet) -> WakewordModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    lines = [line for line in lines if line]
    if len(lines) < 6:
        raise FileFormatError(f"{path}: model file too short")
    header = lines[0].split()
    if header[:1] != [_MODEL_HEADER] or len(header) != 2 or header[1] != str(_MODEL_VERSION):
        raise FileFormatError(f"{path}: bad header line {lines[0]!r}")

    def header_value(line, key):
        parts = line.split(None, 1)
        if len(parts) != 2 or parts[0] != key:
            raise FileFormatError(f"{path}: expected '{key} ...', got {line!r}")
        return parts[1]

    digest = header_value(lines[1], "alphabet-sha256")
    if digest != alphabet.content_hash():
        raise FileFormatError(f"{path}: model was built for a different alphabet")
    beam_width = int(header_value(lines[2], "beam-width"))
    kept = int(header_value(lines[3], "kept-per-example"))
    raw_threshold = header_value(lines[4], "threshold")
    threshold = None if raw_threshold == "unset" else float(raw_threshold)
    hypotheses = []
    for line in lines[5:]:
        fields = line.split("\t")
        if len(fields) != 3:
            raise FileFormatError(f"{path}: bad hypothesis line {line!r}")
        symbols = fields[0].split()
        labels = tuple(alphabet.index_of(s) for s in symbols)
        hypotheses.append(
            Hypothesis(labels=labels, enroll_logprob=float(fields[2]), weight=float(fields[1]))
        )
    return WakewordModel(
        hypotheses=tuple(hypotheses),
        alphabet=alphabet,
        beam_width=beam_width,
        kept_per_example=kept,
        threshold=threshold,
    )


@dataclass(frozen=True)
class DetectionEvent:
    time: float  # seconds from stream start, at the segment close
    score: float
    start_frame: int
    end_frame: int  # exclusive, on the stream's 10 ms frame grid


@dataclass
class DetectionStats:
    frames_processed: int = 0
    speech_frames: int = 0
    label_model_frames: int = 0  # stacked frames pushed through the GRU
    segments_scored: int = 0
    segments_discarded: int = 0
    malformed_chunks: int = 0


@dataclass(frozen=True)
class DetectionReport:
    events: tuple[DetectionEvent, ...]
    stats: DetectionStats


class StreamingDetector:
    """Online detector over a raw sample stream.

    Audio arrives in arbitrary-size chunks. Windows on the 10 ms hop grid
    are VAD-classified; within a speech segment, filterbank frames are
    computed incrementally (pre-emphasis restarts at the segment boundary,
    matching batch extraction on the segment's samples), stacked in pairs,
    pushed through the streaming GRU, and folded into one forward scorer
    per hypothesis. When the segment closes, the aggregate score is
    compared against the threshold. Segment scores therefore equal the
    batch score of the same audio span.
    """

    def __init__(
        self,
        model: WakewordModel,
        weights: GruWeights,
        threshold: float,
        vad_config: VadConfig | None = None,
        aggregation: str = "weighted_sum",
    ):
        if model.alphabet != weights.alphabet:
            raise ValueError("model and label-model alphabets differ")
        if aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        self.model = model
        self.weights = weights
        self.threshold = threshold
        self.aggregation = aggregation
        self.vad = Vad(vad_config or VadConfig())
        self.stats = DetectionStats()
        self._buffer = np.zeros(0, dtype=np.float64)
        self._buffer_start = 0  # absolute index of buffer[0]
        self._next_frame = 0  # next hop-grid frame to classify
        self._segment_start: int | None = None
        self._segment_samples: np.ndarray | None = None
        self._emitted = 0  # feature frames emitted for the open segment
        self._pending_feature: np.ndarray | None = None
        self._gru_state = None
        self._scorers: list[CtcForwardScorer] = []

    def process(self, chunk) -> list[DetectionEvent]:
        """Feed a chunk of samples; returns any events it completed."""
        arr = np.asarray(chunk)
        if arr.ndim != 1 or not np.issubdtype(arr.dtype, np.number):
            self.stats.malformed_chunks += 1
            return []
        if arr.size == 0:
            return []
        arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            self.stats.malformed_chunks += 1
            return []
        self._buffer = np.concatenate([self._buffer, arr])
        events = []
        while True:
            start = self._next_frame * HOP_SAMPLES - self._buffer_start
            if start + WINDOW_SAMPLES > self._buffer.size:
                break
            window = self._buffer[start : start + WINDOW_SAMPLES]
            event = self._handle_frame(self._next_frame, window)
            if event is not None:
                events.append(event)
            self._next_frame += 1
        # Drop samples no window can reach anymore.
        keep_from = self._next_frame * HOP_SAMPLES - self._buffer_start
        if keep_from > 0:
            self._buffer = self._buffer[keep_from:]
            self._buffer_start += keep_from
        return events

    def finish(self) -> list[DetectionEvent]:
        """Close the stream; finalizes an open segment."""
        event = self._close_segment(self._next_frame)
        return [event] if event is not None else []

    def _handle_frame(self, frame_index: int, window: np.ndarray) -> DetectionEvent | None:
        self.stats.frames_processed += 1
        if not self.vad.classify_frame(window):
            return self._close_segment(frame_index)
        self.stats.speech_frames += 1
        if self._segment_start is None:
            self._segment_start = frame_index
            self._segment_samples = window.copy()
            self._emitted = 0
            self._pending_feature = None
            self._gru_state = init_state(self.weights)
            self._scorers = [
                CtcForwardScorer(h.labels, self.weights.num_symbols)
                for h in self.model.hypotheses
            ]
        else:
            self._segment_samples = np.concatenate(
                [self._segment_samples, window[-HOP_SAMPLES:]]
            )
        self._consume_features()
        return None

    def _consume_features(self) -> None:
        samples = self._segment_samples
        while samples.size >= self._emitted * HOP_SAMPLES + WINDOW_SAMPLES:
            start = self._emitted * HOP_SAMPLES
            prev = samples[start - 1] if start > 0 else 0.0
            feature = frame_fbank(samples[start : start + WINDOW_SAMPLES], prev)
            self._emitted += 1
            if self._pending_feature is None:
                self._pending_feature = feature
                continue
            stacked = np.concatenate([self._pending_feature, feature])
            self._pending_feature = None
            row, self._gru_state = gru_step(self.weights, self._gru_state, stacked)
            self.stats.label_model_frames += 1
            for scorer in self._scorers:
                scorer.step(row)

    def _segment_score(self) -> float:
        finals = [s.finalize() for s in self._scorers]
        if self.aggregation == "weighted_sum":
            return sum(h.weight * lp for h, lp in zip(self.model.hypotheses, finals))
        terms = np.array(
            [h.enroll_logprob + lp for h, lp in zip(self.model.hypotheses, finals)]
        )
        return float(np.logaddexp.reduce(terms))

    def _close_segment(self, end_frame: int) -> DetectionEvent | None:
        if self._segment_start is None:
            return None
        start = self._segment_start
        length = end_frame - start
        self._segment_start = None
        self._segment_samples = None
        event = None
        if length >= self.vad.config.min_speech_frames:
            self.stats.segments_scored += 1
            value = self._segment_score()
            if value >= self.threshold:
                end_sample = (end_frame - 1) * HOP_SAMPLES + WINDOW_SAMPLES
                event = DetectionEvent(
                    time=end_sample / SAMPLE_RATE,
                    score=value,
                    start_frame=start,
                    end_frame=end_frame,
                )
        else:
            self.stats.segments_discarded += 1
        self._scorers = []
        self._gru_state = None
        self._pending_feature = None
        self._emitted = 0
        return event


def detect_stream(
    model: WakewordModel,
    weights: GruWeights,
    chunks: Iterable[np.ndarray],
    threshold: float,
    vad_config: VadConfig | None = None,
    aggregation: str = "weighted_sum",
) -> DetectionReport:
    """Run the streaming detector over an iterable of sample chunks."""
    detector = StreamingDetector(model, weights, threshold, vad_config, aggregation)
    events: list[DetectionEvent] = []
    for chunk in chunks:
        events.extend(detector.process(chunk))
    events.extend(detector.finish())
    return DetectionReport(events=tuple(events), stats=detector.stats)
