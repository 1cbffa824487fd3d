"""GRU label model: stacked features in, per-frame label posteriors out.

The recurrent cell is the standard gated recurrent unit,

    z = sigmoid(Wz x + Uz h + bz)
    r = sigmoid(Wr x + Ur h + br)
    c = tanh(Wh x + Uh (r * h) + bh)
    h' = (1 - z) * c + z * h

followed by an affine projection of the top hidden state to K logits and a
per-frame softmax. The model is strictly causal: output row t depends only
on input frames up to t, and batch inference is literally a loop over the
single-step function, so streaming and batch outputs are identical.

Weight container (magic ``WSGW``, version 1, little-endian):

    header  : magic, u32 version, u32 num_layers, u32 hidden, u32 input_dim, u32 K
    layers  : for each layer, float32 row-major Wz Wr Wh Uz Ur Uh bz br bh
    output  : float32 row-major W_out (K x hidden), b_out (K)
    alphabet: u32 count (= K - 1), then per label u32 byte length + UTF-8

Posteriorgram container (magic ``WSPG``, version 1) stores the header
(u32 version, u32 T, u32 K), the alphabet in the same encoding, and the
T x K probabilities as row-major float32.

No trained weights ship with the repo; tests and demos use zero weights,
seeded random weights, or the constructed model from :mod:`wakespot.synth`.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass

import numpy as np

from .audio import FeatureSequence
from .errors import DimensionError, FileFormatError, NonFiniteError, UnknownVersionError

logger = logging.getLogger(__name__)

BLANK_SYMBOL = "<b>"
BLANK_INDEX = 0

_WEIGHTS_MAGIC = b"WSGW"
_POST_MAGIC = b"WSPG"
_FORMAT_VERSION = 1

ROW_SUM_ATOL = 1e-4


@dataclass(frozen=True)
class LabelAlphabet:
    """Ordered label symbols; index 0 is reserved for the CTC blank."""

    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if not all(isinstance(s, str) and s for s in self.labels):
            raise ValueError("labels must be non-empty strings")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be unique")
        if BLANK_SYMBOL in self.labels:
            raise ValueError(f"label set may not contain the reserved blank {BLANK_SYMBOL!r}")

    @property
    def size(self) -> int:
        """K = 1 + number of labels."""
        return 1 + len(self.labels)

    @property
    def blank_index(self) -> int:
        return BLANK_INDEX

    def index_of(self, symbol: str) -> int:
        if symbol == BLANK_SYMBOL:
            return BLANK_INDEX
        try:
            return 1 + self.labels.index(symbol)
        except ValueError:
            raise KeyError(f"unknown label {symbol!r}") from None

    def symbol_of(self, index: int) -> str:
        if index == BLANK_INDEX:
            return BLANK_SYMBOL
        if not 1 <= index < self.size:
            raise IndexError(f"label index {index} out of range for K={self.size}")
        return self.labels[index - 1]

    def content_hash(self) -> str:
        return hashlib.sha256("\x1f".join(self.labels).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GruLayer:
    w_z: np.ndarray
    w_r: np.ndarray
    w_h: np.ndarray
    u_z: np.ndarray
    u_r: np.ndarray
    u_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray


@dataclass(frozen=True)
class GruWeights:
    layers: tuple[GruLayer, ...]
    w_out: np.ndarray
    b_out: np.ndarray
    alphabet: LabelAlphabet

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def hidden_size(self) -> int:
        return self.layers[0].w_z.shape[0]

    @property
    def input_dim(self) -> int:
        return self.layers[0].w_z.shape[1]

    @property
    def num_symbols(self) -> int:
        return self.w_out.shape[0]

    @property
    def num_parameters(self) -> int:
        count = self.w_out.size + self.b_out.size
        for layer in self.layers:
            for name in ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"):
                count += getattr(layer, name).size
        return count

    def validate(self) -> None:
        if not self.layers:
            raise DimensionError("weights must have at least one layer")
        hidden = self.hidden_size
        in_dim = self.input_dim
        for i, layer in enumerate(self.layers):
            expect_in = in_dim if i == 0 else hidden
            for name in ("w_z", "w_r", "w_h"):
                if getattr(layer, name).shape != (hidden, expect_in):
                    raise DimensionError(
                        f"layer {i}: {name} has shape {getattr(layer, name).shape}, "
                        f"expected {(hidden, expect_in)}"
                    )
            for name in ("u_z", "u_r", "u_h"):
                if getattr(layer, name).shape != (hidden, hidden):
                    raise DimensionError(f"layer {i}: {name} must be {(hidden, hidden)}")
            for name in ("b_z", "b_r", "b_h"):
                if getattr(layer, name).shape != (hidden,):
                    raise DimensionError(f"layer {i}: {name} must be a length-{hidden} vector")
            for name in ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"):
                if not np.all(np.isfinite(getattr(layer, name))):
                    raise NonFiniteError(f"layer {i}: {name} contains non-finite values")
        if self.w_out.shape != (self.num_symbols, hidden):
            raise DimensionError(f"output projection must be (K, {hidden})")
        if self.b_out.shape != (self.num_symbols,):
            raise DimensionError("output bias must be a length-K vector")
        if not (np.all(np.isfinite(self.w_out)) and np.all(np.isfinite(self.b_out))):
            raise NonFiniteError("output projection contains non-finite values")
        if self.num_symbols != self.alphabet.size:
            raise DimensionError(
                f"output dim {self.num_symbols} does not match alphabet size {self.alphabet.size}"
            )


@dataclass(frozen=True)
class Posteriorgram:
    """T x K per-frame probabilities over blank + labels."""

    rows: np.ndarray
    alphabet: LabelAlphabet

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            rows = rows.reshape(-1, self.alphabet.size)
        object.__setattr__(self, "rows", rows)
        if rows.shape[1] != self.alphabet.size:
            raise ValueError(
                f"posteriorgram width {rows.shape[1]} does not match alphabet K={self.alphabet.size}"
            )

    @property
    def num_frames(self) -> int:
        return self.rows.shape[0]

    @property
    def num_symbols(self) -> int:
        return self.rows.shape[1]

    def validate(self, atol: float = ROW_SUM_ATOL) -> None:
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("posteriorgram contains non-finite values")
        if self.rows.size and (self.rows.min() < 0.0 or self.rows.max() > 1.0):
            raise ValueError("posteriorgram entries must lie in [0, 1]")
        if self.num_frames:
            sums = self.rows.sum(axis=1)
            worst = float(np.abs(sums - 1.0).max())
            if worst > atol:
                raise ValueError(f"posteriorgram rows must sum to 1 (worst error {worst:.3g})")


def zero_weights(
    alphabet: LabelAlphabet, num_layers: int = 3, hidden_size: int = 96, input_dim: int = 82
) -> GruWeights:
    """All-zero weights; every output row is uniform 1/K."""

    def layer(in_dim):
        return GruLayer(
            *(np.zeros((hidden_size, in_dim)) for _ in range(3)),
            *(np.zeros((hidden_size, hidden_size)) for _ in range(3)),
            *(np.zeros(hidden_size) for _ in range(3)),
        )

    layers = tuple(layer(input_dim if i == 0 else hidden_size) for i in range(num_layers))
    weights = GruWeights(layers, np.zeros((alphabet.size, hidden_size)), np.zeros(alphabet.size), alphabet)
    weights.validate()
    return weights


def random_weights(
    alphabet: LabelAlphabet,
    num_layers: int = 3,
    hidden_size: int = 96,
    input_dim: int = 82,
    seed: int = 0,
) -> GruWeights:
    """Seeded random weights, scaled by fan-in; a stand-in for trained models."""
    rng = np.random.default_rng(seed)

    def mat(rows, cols):
        return rng.normal(0.0, 1.0 / np.sqrt(cols), size=(rows, cols))

    layers = []
    for i in range(num_layers):
        in_dim = input_dim if i == 0 else hidden_size
        layers.append(
            GruLayer(
                mat(hidden_size, in_dim),
                mat(hidden_size, in_dim),
                mat(hidden_size, in_dim),
                mat(hidden_size, hidden_size),
                mat(hidden_size, hidden_size),
                mat(hidden_size, hidden_size),
                np.zeros(hidden_size),
                np.zeros(hidden_size),
                np.zeros(hidden_size),
            )
        )
    weights = GruWeights(
        tuple(layers), mat(alphabet.size, hidden_size), np.zeros(alphabet.size), alphabet
    )
    weights.validate()
    return weights


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    ex = np.exp(shifted)
    return ex / ex.sum()


GruState = tuple[np.ndarray, ...]


def init_state(weights: GruWeights) -> GruState:
    return tuple(np.zeros(weights.hidden_size) for _ in weights.layers)


def gru_step(weights: GruWeights, state: GruState, frame: np.ndarray) -> tuple[np.ndarray, GruState]:
    """One frame through all layers; returns (posterior row, new state)."""
    x = np.asarray(frame, dtype=np.float64)
    if x.shape != (weights.input_dim,):
        raise ValueError(f"frame dim {x.shape} does not match input dim {weights.input_dim}")
    new_state = []
    for layer, h in zip(weights.layers, state):
        z = _sigmoid(layer.w_z @ x + layer.u_z @ h + layer.b_z)
        r = _sigmoid(layer.w_r @ x + layer.u_r @ h + layer.b_r)
        c = np.tanh(layer.w_h @ x + layer.u_h @ (r * h) + layer.b_h)
        h = (1.0 - z) * c + z * h
        new_state.append(h)
        x = h
    row = _softmax(weights.w_out @ x + weights.b_out)
    return row, tuple(new_state)


def run_streaming(
    weights: GruWeights, state: GruState | None, frame: np.ndarray
) -> tuple[np.ndarray, GruState]:
    """Streaming variant: feed one frame, carry the returned state forward."""
    if state is None:
        state = init_state(weights)
    return gru_step(weights, state, frame)


def run(weights: GruWeights, features: FeatureSequence) -> Posteriorgram:
    """Batch inference; concatenation of single steps, so it matches streaming."""
    if features.dim != weights.input_dim:
        raise ValueError(
            f"feature dim {features.dim} does not match model input dim {weights.input_dim}"
        )
    state = init_state(weights)
    rows = np.zeros((features.num_frames, weights.num_symbols))
    for t in range(features.num_frames):
        rows[t], state = gru_step(weights, state, features.frames[t])
    return Posteriorgram(rows, weights.alphabet)


def _write_alphabet(fh, alphabet: LabelAlphabet) -> None:
    fh.write(struct.pack("<I", len(alphabet.labels)))
    for label in alphabet.labels:
        raw = label.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)


def _read_alphabet(fh, path) -> LabelAlphabet:
    (count,) = struct.unpack("<I", _read_exact(fh, 4, path))
    labels = []
    for _ in range(count):
        (length,) = struct.unpack("<I", _read_exact(fh, 4, path))
        labels.append(_read_exact(fh, length, path).decode("utf-8"))
    try:
        return LabelAlphabet(tuple(labels))
    except ValueError as exc:
        raise FileFormatError(f"{path}: bad alphabet ({exc})") from exc


def _read_exact(fh, n: int, path) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise DimensionError(f"{path}: truncated file")
    return raw


def _write_matrix(fh, array: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def _read_matrix(fh, shape: tuple[int, ...], path) -> np.ndarray:
    n = int(np.prod(shape))
    raw = _read_exact(fh, 4 * n, path)
    return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)


_LAYER_FIELDS = ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h")


def save_weights(path, weights: GruWeights) -> None:
    weights.validate()
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sIIIII",
                _WEIGHTS_MAGIC,
                _FORMAT_VERSION,
                weights.num_layers,
                weights.hidden_size,
                weights.input_dim,
                weights.num_symbols,
            )
        )
        for layer in weights.layers:
            for name in _LAYER_FIELDS:
                _write_matrix(fh, getattr(layer, name))
        _write_matrix(fh, weights.w_out)
        _write_matrix(fh, weights.b_out)
        _write_alphabet(fh, weights.alphabet)


def load_weights(path) -> GruWeights:
    """Load and validate a weight file; logs the parameter count."""
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sIIIII"))
        if len(header) < struct.calcsize("<4sIIIII"):
            raise UnknownVersionError(f"{path}: truncated weight header")
        magic, version, num_layers, hidden, input_dim, num_symbols = struct.unpack(
            "<4sIIIII", header
        )
        if magic != _WEIGHTS_MAGIC:
            raise UnknownVersionError(f"{path}: not a weight file (magic {magic!r})")
        if version != _FORMAT_VERSION:
            raise UnknownVersionError(f"{path}: unsupported weight version {version}")
        layers = []
        for i in range(num_layers):
            in_dim = input_dim if i == 0 else hidden
            fields = {}
            for name in _LAYER_FIELDS:
                shape = (
                    (hidden, in_dim)
                    if name in ("w_z", "w_r", "w_h")
                    else (hidden, hidden)
                    if name in ("u_z", "u_r", "u_h")
                    else (hidden,)
                )
                fields[name] = _read_matrix(fh, shape, path)
            layers.append(GruLayer(**fields))
        w_out = _read_matrix(fh, (num_symbols, hidden), path)
        b_out = _read_matrix(fh, (num_symbols,), path)
        alphabet = _read_alphabet(fh, path)
        trailing = fh.read(1)
    if trailing:
        raise DimensionError(f"{path}: trailing bytes after alphabet")
    weights = GruWeights(tuple(layers), w_out, b_out, alphabet)
    weights.validate()
    logger.info(
        "loaded GRU weights from %s: %d layers x %d hidden, input %d, K=%d, %d parameters",
        path,
        weights.num_layers,
        weights.hidden_size,
        weights.input_dim,
        weights.num_symbols,
        weights.num_parameters,
    )
    return weights


def save_posteriorgram(path, post: Posteriorgram) -> None:
    post.validate()
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sIII", _POST_MAGIC, _FORMAT_VERSION, post.num_frames, post.num_symbols
            )
        )
        _write_alphabet(fh, post.alphabet)
        _write_matrix(fh, post.rows)


def load_posteriorgram(path) -> Posteriorgram:
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sIII"))
        if len(header) < struct.calcsize("<4sIII"):
            raise UnknownVersionError(f"{path}: truncated posteriorgram header")
        magic, version, count, num_symbols = struct.unpack("<4sIII", header)
        if magic != _POST_MAGIC:
            raise UnknownVersionError(f"{path}: not a posteriorgram file (magic {magic!r})")
        if version != _FORMAT_VERSION:
            raise UnknownVersionError(f"{path}: unsupported posteriorgram version {version}")
        alphabet = _read_alphabet(fh, path)
        if alphabet.size != num_symbols:
            raise DimensionError(
                f"{path}: header K={num_symbols} does not match alphabet size {alphabet.size}"
            )
        rows = _read_matrix(fh, (count, num_symbols), path)
        trailing = fh.read(1)
    if trailing:
        raise DimensionError(f"{path}: trailing bytes after probabilities")
    post = Posteriorgram(rows, alphabet)
    try:
        post.validate(atol=ROW_SUM_ATOL)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    return post
