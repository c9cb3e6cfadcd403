"""Protein-specific conditioning maps fed to the score network.

Channel layout of an assembled bundle (default widths)::

    [0, 40)     pairwise one-hot  (row residue block, then column residue block)
    [40, 88)    pairwise positional encoding (row code, then column code)
    [88, 188)   inter-residue predictions: distance 37 | omega 25 | gamma 25 | phi 13
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, FormatError, InvalidInputError
from .geometry import ALPHABET
from .io import read_tensor, write_tensor

MAX_LENGTH = 1000
DEFAULT_PE_WIDTH = 48

# (name, width, symmetric)
PREDICTION_GROUPS = (("distance", 37, True), ("omega", 25, True), ("gamma", 25, False), ("phi", 13, False))
PREDICTION_CHANNELS = sum(w for _, w, _ in PREDICTION_GROUPS)
NORMALIZATION_TOL = 1e-3

# distance channel 0 is "beyond 20 A"; channels 1..36 are 0.5 A bins from 2 A
DISTANCE_BIN_EDGES = np.linspace(2.0, 20.0, 37)
DISTANCE_BIN_CENTERS = 0.5 * (DISTANCE_BIN_EDGES[1:] + DISTANCE_BIN_EDGES[:-1])
FAR_DISTANCE = 22.0


def group_slices():
    out, start = {}, 0
    for name, width, _ in PREDICTION_GROUPS:
        out[name] = slice(start, start + width)
        start += width
    return out


def _pairwise(codes: np.ndarray) -> np.ndarray:
    L, w = codes.shape
    out = np.empty((L, L, 2 * w))
    out[:, :, :w] = codes[:, None, :]
    out[:, :, w:] = codes[None, :, :]
    return out


def one_hot(sequence) -> np.ndarray:
    """(L, 20) one-hot rows; residues outside the alphabet get a zero row."""
    if not sequence:
        raise InvalidInputError("empty sequence")
    out = np.zeros((len(sequence), len(ALPHABET)))
    for i, aa in enumerate(sequence.upper()):
        j = ALPHABET.find(aa)
        if j >= 0:
            out[i, j] = 1.0
    return out


def one_hot_pairwise(sequence) -> np.ndarray:
    """(L, L, 40) map with cell (i, j) = concat(onehot(s_i), onehot(s_j))."""
    return _pairwise(one_hot(sequence))


def residue_position_codes(L, width=DEFAULT_PE_WIDTH, max_length=MAX_LENGTH) -> np.ndarray:
    """(L, width / 2) sinusoidal codes with interleaved sin/cos columns."""
    if width <= 0 or width % 4:
        raise ConfigError(f"positional encoding width must be a positive multiple of 4, got {width}")
    pos = np.arange(L, dtype=np.float64)[:, None]
    r = np.arange(width // 4, dtype=np.float64)[None, :]
    arg = pos / np.power(float(max_length), 4.0 * r / width)
    codes = np.empty((L, width // 2))
    codes[:, 0::2] = np.sin(arg)
    codes[:, 1::2] = np.cos(arg)
    return codes


def positional_encoding(L, width=DEFAULT_PE_WIDTH, max_length=MAX_LENGTH) -> np.ndarray:
    return _pairwise(residue_position_codes(L, width, max_length))


@dataclass(frozen=True)
class PredictionMap:
    """(L, L, 100) binned distance/orientation probabilities."""

    values: np.ndarray
    normalized: bool

    @property
    def length(self):
        return self.values.shape[0]


def check_normalized(values, tol=NORMALIZATION_TOL) -> bool:
    for sl in group_slices().values():
        if np.abs(values[..., sl].sum(axis=-1) - 1.0).max(initial=0.0) > tol:
            return False
    return True


def as_prediction_map(values) -> PredictionMap:
    values = np.asarray(values)
    if values.ndim != 3 or values.shape[0] != values.shape[1] or values.shape[2] != PREDICTION_CHANNELS:
        raise FormatError(f"prediction tensor must be (L, L, {PREDICTION_CHANNELS}), got {values.shape}")
    if np.isnan(values).any():
        idx = tuple(int(v) for v in np.argwhere(np.isnan(values))[0])
        raise DataError(f"prediction tensor has NaN at {idx}")
    return PredictionMap(values, check_normalized(values))


def save_predictions(path, values, metadata=None):
    meta = {"groups": ",".join(f"{n}:{w}:{'sym' if s else 'asym'}" for n, w, s in PREDICTION_GROUPS)}
    meta.update(metadata or {})
    write_tensor(path, np.asarray(values, dtype=np.float32), meta)


def load_predictions(path) -> PredictionMap:
    """Load a prediction tensor file and check per-cell bin normalisation."""
    values, _ = read_tensor(path)
    return as_prediction_map(values)


@dataclass(frozen=True)
class ConditioningBundle:
    sequence: str
    onehot: np.ndarray
    posenc: np.ndarray
    predictions: np.ndarray
    predictions_normalized: bool
    manifest: tuple = field(default=())

    @property
    def length(self):
        return len(self.sequence)

    @property
    def channels(self):
        return self.onehot.shape[-1] + self.posenc.shape[-1] + self.predictions.shape[-1]

    def features(self) -> np.ndarray:
        """All maps stacked along the channel axis, (L, L, channels)."""
        return np.concatenate([self.onehot, self.posenc, self.predictions], axis=-1)

    def crop(self, start, size) -> "ConditioningBundle":
        """Bundle of the contiguous residue window [start, start + size).

        Positional codes are taken from the absolute positions of the window.
        """
        sl = slice(start, start + size)
        return ConditioningBundle(
            self.sequence[sl],
            self.onehot[sl, sl],
            self.posenc[sl, sl],
            self.predictions[sl, sl],
            self.predictions_normalized,
            self.manifest,
        )


def assemble(sequence, pe_width=DEFAULT_PE_WIDTH, predictions=None, mask=None) -> ConditioningBundle:
    """Stack one-hot, positional and prediction maps for ``sequence``.

    ``predictions`` may be a PredictionMap, an array, or None (zero channels).
    ``mask="orientation"`` zeroes the omega/gamma/phi blocks and keeps distances.
    """
    L = len(sequence)
    if L == 0:
        raise InvalidInputError("empty sequence")
    if predictions is None:
        pred = np.zeros((L, L, PREDICTION_CHANNELS))
        normalized = False
    else:
        pm = predictions if isinstance(predictions, PredictionMap) else as_prediction_map(predictions)
        if pm.length != L:
            raise InvalidInputError(f"predictions cover {pm.length} residues, sequence has {L}")
        pred = np.array(pm.values, dtype=np.float64)
        normalized = pm.normalized
    if mask not in (None, "none", "orientation"):
        raise ConfigError(f"unknown prediction mask {mask!r}")
    if mask == "orientation":
        sl = group_slices()
        for name in ("omega", "gamma", "phi"):
            pred[..., sl[name]] = 0.0
        normalized = False
    manifest = (
        ("onehot", 2 * len(ALPHABET)),
        ("posenc", pe_width),
        *((f"pred_{n}", w) for n, w, _ in PREDICTION_GROUPS),
    )
    return ConditioningBundle(
        sequence.upper(),
        one_hot_pairwise(sequence),
        positional_encoding(L, pe_width),
        pred,
        normalized,
        manifest,
    )


def expected_distance_weights(pe_width=DEFAULT_PE_WIDTH) -> np.ndarray:
    """Per-channel weights turning a feature vector into the expected distance
    under its distance histogram (zero outside the distance block)."""
    w = np.zeros(2 * len(ALPHABET) + pe_width + PREDICTION_CHANNELS)
    sl = group_slices()["distance"]
    off = 2 * len(ALPHABET) + pe_width
    w[off + sl.start] = FAR_DISTANCE
    w[off + sl.start + 1:off + sl.stop] = DISTANCE_BIN_CENTERS
    return w


def far_probability_weights(pe_width=DEFAULT_PE_WIDTH) -> np.ndarray:
    """Per-channel weights giving minus the probability of the beyond-20 A bin."""
    w = np.zeros(2 * len(ALPHABET) + pe_width + PREDICTION_CHANNELS)
    w[2 * len(ALPHABET) + pe_width + group_slices()["distance"].start] = -1.0
    return w
