"""Recording ingestion, filtering, segmentation, and scalar quantization.

The functions here turn raw multichannel recordings into the per-segment
feature sequences and quantized symbol sequences the estimators consume.
All operations are pure: inputs are never mutated and outputs are new
objects, so per-channel work can run in parallel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import (
    BadBand,
    BadInput,
    DegenerateInput,
    EmptyInput,
    NumericalError,
    ParseError,
    ShapeError,
    TooShort,
)

FEATURES = ("mean", "energy")

# A 4th-order Butterworth run forward-backward applies its magnitude twice,
# so the design cutoff is moved off the requested edge to keep the combined
# response at -3 dB there: |H|^4 = 1/2  =>  (w_e/w_c)^(2N) = sqrt(2) - 1.
_FILTER_ORDER = 4
_EDGE_SHIFT = (np.sqrt(2.0) - 1.0) ** (1.0 / (2 * _FILTER_ORDER))


@dataclass(frozen=True)
class Recording:
    """Multichannel samples at a fixed rate.

    samples has one row per time sample and one column per channel; all
    channels therefore share a single length.
    """

    samples: np.ndarray
    sample_rate_hz: float
    labels: tuple[str, ...]

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", tuple(self.labels))
        if samples.ndim != 2:
            raise ShapeError("samples must be a 2-D (time x channel) array")
        if self.sample_rate_hz <= 0:
            raise BadInput("sample_rate_hz must be positive")
        if len(self.labels) != samples.shape[1]:
            raise ShapeError(
                f"{len(self.labels)} labels for {samples.shape[1]} channels"
            )
        if len(set(self.labels)) != len(self.labels):
            raise ShapeError("channel labels must be unique")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    def channel(self, label: str) -> np.ndarray:
        return self.samples[:, self.labels.index(label)]


@dataclass(frozen=True)
class FeatureSequence:
    """One scalar feature per segment for a single channel."""

    values: np.ndarray
    segment_len_ms: float
    overlap_ms: float
    source_channel: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        object.__setattr__(self, "values", values)
        if self.segment_len_ms <= 0:
            raise BadInput("segment_len_ms must be positive")
        if not 0 <= self.overlap_ms < self.segment_len_ms:
            raise BadInput("overlap_ms must lie in [0, segment_len_ms)")

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Codebook:
    """Scalar quantizer: p cells with strictly increasing representatives.

    Cell k is the half-open interval [boundaries[k-1], boundaries[k]); ties
    on a boundary therefore quantize upward.  At a Lloyd fixed point the
    boundaries are midpoints of adjacent representatives, which is validated
    here to 1e-6.
    """

    boundaries: np.ndarray
    representatives: np.ndarray
    p: int

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float).ravel()
        r = np.asarray(self.representatives, dtype=float).ravel()
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "representatives", r)
        if self.p < 2:
            raise DegenerateInput("codebook needs p >= 2 levels")
        if r.size != self.p or b.size != self.p - 1:
            raise ShapeError("codebook needs p representatives and p-1 boundaries")
        if np.any(np.diff(r) <= 0) or (b.size > 1 and np.any(np.diff(b) <= 0)):
            raise BadInput("representatives and boundaries must strictly increase")
        cells_lo = np.concatenate(([-np.inf], b))
        cells_hi = np.concatenate((b, [np.inf]))
        if np.any(r < cells_lo) or np.any(r >= cells_hi):
            raise BadInput("each representative must lie inside its cell")
        midpoints = 0.5 * (r[:-1] + r[1:])
        scale = max(1.0, float(np.max(np.abs(r))))
        if np.max(np.abs(midpoints - b)) > 1e-6 * scale:
            raise BadInput("boundaries are not midpoints of adjacent representatives")


@dataclass(frozen=True)
class QuantizedSequence:
    """Integer symbols in [0, alphabet_size) produced by a codebook."""

    symbols: np.ndarray
    alphabet_size: int
    codebook_id: str | None = None

    def __post_init__(self):
        symbols = np.asarray(self.symbols, dtype=np.int64).ravel()
        object.__setattr__(self, "symbols", symbols)
        if self.alphabet_size < 1:
            raise BadInput("alphabet_size must be >= 1")
        if symbols.size and (symbols.min() < 0 or symbols.max() >= self.alphabet_size):
            raise BadInput("symbols must lie in [0, alphabet_size)")

    def __len__(self) -> int:
        return self.symbols.size


def load_recording(path, fmt: str = "csv", sample_rate_hz: float = 1.0) -> Recording:
    """Load a recording from a CSV file.

    The header row holds the channel labels and every subsequent row is one
    time sample across channels.  The file carries no rate, so the caller
    supplies ``sample_rate_hz``.

    Raises
    ------
    ParseError
        Ragged rows or non-numeric cells.
    EmptyInput
        Missing header or no data rows.
    """
    if fmt != "csv":
        raise ParseError(f"unsupported format: {fmt!r}")
    try:
        fh = open(path, "r", newline="")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyInput(f"{path} is empty")
    labels = tuple(cell.strip() for cell in rows[0])
    data = rows[1:]
    if not data:
        raise EmptyInput(f"{path} has a header but no samples")
    width = len(labels)
    out = np.empty((len(data), width), dtype=float)
    for i, row in enumerate(data):
        if len(row) != width:
            raise ParseError(
                f"{path}:{i + 2}: expected {width} cells, found {len(row)}"
            )
        try:
            out[i] = [float(cell) for cell in row]
        except ValueError as exc:
            raise ParseError(f"{path}:{i + 2}: non-numeric cell") from exc
    return Recording(out, sample_rate_hz, labels)


def bandpass_notch(
    rec: Recording,
    low_hz: float,
    high_hz: float,
    notch: tuple[float, float] | None = None,
) -> Recording:
    """Zero-phase band-pass (plus optional notch) across all channels.

    The filters run forward-backward so channels stay aligned in time; the
    Butterworth cutoffs are pre-shifted so the combined response sits at
    -3 dB on the requested band edges.  ``notch`` is a (low, high) band in
    Hz inside the passband.

    Raises
    ------
    BadBand
        If the band or notch is inconsistent with the sampling rate.
    """
    nyq = rec.sample_rate_hz / 2.0
    if not (0 <= low_hz < high_hz < nyq):
        raise BadBand(f"need 0 <= low < high < {nyq} Hz")
    if notch is not None:
        n_lo, n_hi = notch
        if not (low_hz < n_lo < n_hi < high_hz):
            raise BadBand("notch band must sit strictly inside the passband")

    out = np.array(rec.samples, dtype=float)
    if low_hz > 0:
        sos = sps.butter(
            _FILTER_ORDER, low_hz * _EDGE_SHIFT / nyq, btype="highpass", output="sos"
        )
        out = sps.sosfiltfilt(sos, out, axis=0)
    sos = sps.butter(
        _FILTER_ORDER, high_hz / _EDGE_SHIFT / nyq, btype="lowpass", output="sos"
    )
    out = sps.sosfiltfilt(sos, out, axis=0)
    if notch is not None:
        n_lo, n_hi = notch
        center = 0.5 * (n_lo + n_hi)
        q = center / (n_hi - n_lo)
        b, a = sps.iirnotch(center / nyq, q)
        out = sps.filtfilt(b, a, out, axis=0)
    return Recording(out, rec.sample_rate_hz, rec.labels)


def band_gain(rec_rate_hz: float, low_hz: float, high_hz: float, freq_hz: float) -> float:
    """Analytic amplitude gain of the band-pass at one frequency.

    This is the transfer function the implementation realizes (squared
    single-pass magnitude, because the filter runs forward-backward); tests
    compare measured gains against it.
    """
    nyq = rec_rate_hz / 2.0
    w = np.array([freq_hz / nyq * np.pi])
    gain = 1.0
    if low_hz > 0:
        sos = sps.butter(
            _FILTER_ORDER, low_hz * _EDGE_SHIFT / nyq, btype="highpass", output="sos"
        )
        _, h = sps.sosfreqz(sos, worN=w)
        gain *= np.abs(h[0]) ** 2
    sos = sps.butter(
        _FILTER_ORDER, high_hz / _EDGE_SHIFT / nyq, btype="lowpass", output="sos"
    )
    _, h = sps.sosfreqz(sos, worN=w)
    gain *= np.abs(h[0]) ** 2
    return float(gain)


def segment_features(
    rec: Recording,
    segment_len_ms: float,
    overlap_ms: float,
    feature: str = "mean",
) -> list[FeatureSequence]:
    """Slice each channel into overlapping segments and reduce each to a scalar.

    With L = segment length and S = L - overlap (both in samples), a channel
    of M samples yields floor((M - L) / S) + 1 segments.  ``feature`` is
    "mean" (segment average) or "energy" (segment mean square).
    """
    if feature not in FEATURES:
        raise BadInput(f"feature must be one of {FEATURES}")
    rate = rec.sample_rate_hz
    seg_len = int(round(segment_len_ms * rate / 1000.0))
    overlap = int(round(overlap_ms * rate / 1000.0))
    if seg_len < 1:
        raise BadInput("segment length must cover at least one sample")
    if not 0 <= overlap < seg_len:
        raise BadInput("overlap must be shorter than the segment")
    if rec.n_samples < seg_len:
        raise TooShort(
            f"recording has {rec.n_samples} samples, segment needs {seg_len}"
        )
    step = seg_len - overlap
    out = []
    for idx, label in enumerate(rec.labels):
        windows = np.lib.stride_tricks.sliding_window_view(
            rec.samples[:, idx], seg_len
        )[::step]
        if feature == "mean":
            values = windows.mean(axis=1)
        else:
            values = np.mean(windows**2, axis=1)
        out.append(
            FeatureSequence(values, segment_len_ms, overlap_ms, source_channel=label)
        )
    return out


def train_lloyd_max(
    values,
    p: int,
    *,
    rel_tol: float = 1e-8,
    max_iter: int = 500,
    return_history: bool = False,
):
    """Design a p-level Lloyd-Max quantizer for the given samples.

    Starts from p spread-out data quantiles (deterministic, no empty cells)
    and alternates the two Lloyd updates: boundaries to midpoints of
    adjacent representatives, representatives to conditional means of their
    cells.  Iteration stops when the relative distortion change drops below
    ``rel_tol`` or after ``max_iter`` rounds.  Distortion is asserted
    non-increasing at every round.

    Returns the Codebook, or ``(Codebook, distortion_history)`` when
    ``return_history`` is set.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise EmptyInput("no training values")
    if not np.all(np.isfinite(values)):
        raise BadInput("training values must be finite")
    if p < 2:
        raise DegenerateInput("p must be >= 2")
    uniq = np.unique(values)
    if uniq.size < p:
        raise DegenerateInput(f"need at least {p} distinct values, got {uniq.size}")

    pos = ((np.arange(p) + 0.5) * uniq.size / p).astype(int)
    reps = uniq[np.minimum(pos, uniq.size - 1)]

    history: list[float] = []
    prev = np.inf
    for _ in range(max_iter):
        boundaries = 0.5 * (reps[:-1] + reps[1:])
        cells = np.searchsorted(boundaries, values, side="right")
        distortion = float(np.mean((values - reps[cells]) ** 2))
        if distortion > prev * (1 + 1e-12):
            raise NumericalError("Lloyd distortion increased")
        history.append(distortion)
        sums = np.bincount(cells, weights=values, minlength=p)
        counts = np.bincount(cells, minlength=p)
        filled = counts > 0
        new_reps = reps.copy()
        new_reps[filled] = sums[filled] / counts[filled]
        reps = new_reps
        if prev - distortion <= rel_tol * max(prev, 1e-300) and np.isfinite(prev):
            break
        prev = distortion

    if np.any(np.diff(reps) <= 0):
        raise NumericalError("Lloyd representatives collapsed")
    cb = Codebook(0.5 * (reps[:-1] + reps[1:]), reps, p)
    if return_history:
        return cb, history
    return cb


def quantize(
    seq: FeatureSequence, cb: Codebook, codebook_id: str | None = None
) -> QuantizedSequence:
    """Map features to codebook cells.

    Symbol k means the value fell in cell k; values equal to a boundary go
    to the higher cell, so the map is monotone in the feature value.
    """
    symbols = np.searchsorted(cb.boundaries, seq.values, side="right")
    return QuantizedSequence(
        symbols,
        alphabet_size=cb.p,
        codebook_id=codebook_id if codebook_id is not None else seq.source_channel,
    )
