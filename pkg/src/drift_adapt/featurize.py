"""Kinematics channel derivation and per-channel feature extraction.

A recording carries linear acceleration and angular velocity triples.
From those we derive angular acceleration and jerk by finite differences
and a magnitude series for each triple, giving 16 named channels.  Each
channel is summarized by 32 scalar features (temporal statistics,
autocorrelations at lags 1..10, and one-sided power-spectrum summaries),
so the default schema has 512 columns.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DimensionError, SchemaError

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

QUANTITIES = ("lin_acc", "ang_vel", "ang_acc", "ang_jerk")
AXES = ("x", "y", "z", "mag")
CHANNEL_NAMES = tuple(f"{q}_{a}" for q in QUANTITIES for a in AXES)

_TEMPORAL = (
    "peak",
    "min",
    "mean",
    "std",
    "rms",
    "peak_to_peak",
    "time_to_peak",
    "signed_area",
    "abs_area",
    "zero_crossings",
)
_AUTOCORR = tuple(f"autocorr_lag{k}" for k in range(1, 11))
_SPECTRAL = (
    "total_power",
    "band_power_1",
    "band_power_2",
    "band_power_3",
    "band_power_4",
    "band_power_5",
    "band_power_6",
    "band_power_7",
    "band_power_8",
    "spectral_centroid",
    "dominant_freq",
    "spectral_entropy",
)
FEATURE_NAMES = _TEMPORAL + _AUTOCORR + _SPECTRAL
_N_BANDS = 8


def vector_magnitude(v: np.ndarray) -> np.ndarray:
    """Euclidean norm of a (3, T) series, per sample.

    The three squares are sorted before summing so the result is
    bit-identical under any permutation of the input rows.  Axis
    relabeling (data augmentation) then leaves magnitude channels
    exactly unchanged.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != 3:
        raise DimensionError(f"expected a (3, T) array, got {v.shape}")
    sq = np.sort(v * v, axis=0)
    return np.sqrt(sq[0] + sq[1] + sq[2])


@dataclass
class KinematicsChannels:
    """The 16 named channel series derived from one recording."""

    sample_rate: float
    t: np.ndarray
    channels: dict[str, np.ndarray]

    def series(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise SchemaError(f"unknown channel {name!r}") from None


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered list of (channel, feature) pairs defining feature columns."""

    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        for chan, feat in self.entries:
            if chan not in CHANNEL_NAMES:
                raise SchemaError(f"unknown channel {chan!r} in schema")
            if feat not in FEATURE_NAMES:
                raise SchemaError(f"unknown feature {feat!r} in schema")
        if len(set(self.entries)) != len(self.entries):
            raise SchemaError("schema contains duplicate (channel, feature) entries")

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> list[str]:
        return [f"{chan}.{feat}" for chan, feat in self.entries]

    def fingerprint(self) -> str:
        digest = hashlib.sha256(";".join(self.names()).encode("utf-8"))
        return digest.hexdigest()

    def to_dict(self) -> dict:
        return {"entries": [list(e) for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        try:
            entries = tuple((str(c), str(f)) for c, f in d["entries"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"malformed schema document: {exc}") from exc
        return cls(entries)


def default_schema() -> FeatureSchema:
    """All 32 features for all 16 channels (512 columns)."""
    return FeatureSchema(tuple((c, f) for c in CHANNEL_NAMES for f in FEATURE_NAMES))


@dataclass
class FeatureMatrix:
    """Feature rows for one dataset, tied to the schema that produced them."""

    values: np.ndarray
    schema: FeatureSchema
    impact_ids: list[str] = field(default_factory=list)
    domain_tag: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError(f"feature values must be 2-d, got {self.values.shape}")
        if self.values.shape[1] != len(self.schema):
            raise DimensionError(
                f"{self.values.shape[1]} columns vs {len(self.schema)} schema entries"
            )
        if self.impact_ids and len(self.impact_ids) != self.values.shape[0]:
            raise DimensionError("impact_ids length does not match row count")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def derive_channels(rec) -> KinematicsChannels:
    """Expand a recording into the 16 channel series.

    Angular acceleration is the time derivative of angular velocity
    (central differences inside, one-sided at the ends) and angular jerk
    is the derivative of that.  Derivatives of a linear ramp are exact.
    """
    lin = np.asarray(rec.lin_acc, dtype=np.float64)
    ang = np.asarray(rec.ang_vel, dtype=np.float64)
    t = np.asarray(rec.t, dtype=np.float64)
    if lin.shape != ang.shape or lin.ndim != 2 or lin.shape[0] != 3:
        raise DimensionError(
            f"recording arrays must both be (3, T), got {lin.shape} and {ang.shape}"
        )
    if t.shape[0] != lin.shape[1]:
        raise DimensionError("time axis length does not match samples")
    if t.shape[0] < 2:
        raise DimensionError("recording must contain at least two samples")
    dt = 1.0 / float(rec.sample_rate)
    ang_acc = np.gradient(ang, dt, axis=1)
    ang_jerk = np.gradient(ang_acc, dt, axis=1)
    channels: dict[str, np.ndarray] = {}
    for name, triple in zip(QUANTITIES, (lin, ang, ang_acc, ang_jerk)):
        for i, axis in enumerate(("x", "y", "z")):
            channels[f"{name}_{axis}"] = triple[i]
        channels[f"{name}_mag"] = vector_magnitude(triple)
    return KinematicsChannels(float(rec.sample_rate), t, channels)


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def dft_power(x: np.ndarray, sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided power spectrum of a real series.

    The series is zero-padded to the next power of two (at least 8
    samples required).  Power is |X_k|^2 / N with interior bins doubled,
    so the total equals the sum of squared samples (Parseval).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 8:
        raise DimensionError("dft_power needs a 1-d series with at least 8 samples")
    if not np.all(np.isfinite(x)):
        raise DimensionError("dft_power input contains non-finite values")
    n = _next_pow2(x.shape[0])
    spec = np.fft.rfft(x, n)
    power = np.abs(spec) ** 2 / n
    power[1:-1] *= 2.0
    freqs = np.fft.rfftfreq(n, d=1.0 / float(sample_rate))
    return freqs, power


def _autocorr(x: np.ndarray, max_lag: int) -> np.ndarray:
    c = x - x.mean()
    denom = float(c @ c)
    out = np.zeros(max_lag)
    if denom == 0.0:
        return out
    n = x.shape[0]
    for k in range(1, max_lag + 1):
        if k < n:
            out[k - 1] = float(c[:-k] @ c[k:]) / denom
    return out


def _channel_features(x: np.ndarray, t: np.ndarray, fs: float) -> dict[str, float]:
    feats: dict[str, float] = {}
    feats["peak"] = float(np.max(x))
    feats["min"] = float(np.min(x))
    feats["mean"] = float(np.mean(x))
    feats["std"] = float(np.std(x))
    feats["rms"] = float(np.sqrt(np.mean(x * x)))
    feats["peak_to_peak"] = feats["peak"] - feats["min"]
    feats["time_to_peak"] = float(t[int(np.argmax(x))] - t[0])
    feats["signed_area"] = float(_trapezoid(x, dx=1.0 / fs))
    feats["abs_area"] = float(_trapezoid(np.abs(x), dx=1.0 / fs))
    feats["zero_crossings"] = float(np.sum(x[:-1] * x[1:] < 0.0))

    ac = _autocorr(x, 10)
    for k in range(1, 11):
        feats[f"autocorr_lag{k}"] = float(ac[k - 1])

    freqs, power = dft_power(x, fs)
    total = float(np.sum(power))
    feats["total_power"] = total
    nyquist = fs / 2.0
    edges = np.linspace(0.0, nyquist, _N_BANDS + 1)
    # bands partition the bins: band b covers [edge_{b-1}, edge_b), last one
    # closed at the Nyquist bin, so band powers sum to the total
    idx = np.searchsorted(edges, freqs, side="right") - 1
    idx = np.clip(idx, 0, _N_BANDS - 1)
    for b in range(_N_BANDS):
        feats[f"band_power_{b + 1}"] = float(np.sum(power[idx == b]))
    if total > 0.0:
        feats["spectral_centroid"] = float(np.sum(freqs * power) / total)
        p = power[power > 0.0] / total
        feats["spectral_entropy"] = float(-np.sum(p * np.log(p)))
    else:
        feats["spectral_centroid"] = 0.0
        feats["spectral_entropy"] = 0.0
    feats["dominant_freq"] = float(freqs[int(np.argmax(power))])
    return feats


def extract_features(ch: KinematicsChannels, schema: FeatureSchema) -> np.ndarray:
    """Feature vector for one recording, ordered per the schema."""
    cache: dict[str, dict[str, float]] = {}
    out = np.empty(len(schema))
    for i, (chan, feat) in enumerate(schema.entries):
        if chan not in cache:
            cache[chan] = _channel_features(ch.series(chan), ch.t, ch.sample_rate)
        out[i] = cache[chan][feat]
    return out


def featurize_dataset(ds, schema: FeatureSchema) -> FeatureMatrix:
    """Feature matrix for every recording in a dataset."""
    rows = np.empty((len(ds.recordings), len(schema)))
    ids = []
    for i, rec in enumerate(ds.recordings):
        rows[i] = extract_features(derive_channels(rec), schema)
        ids.append(rec.impact_id)
    return FeatureMatrix(rows, schema, ids, ds.domain_tag)


def save_features(fm: FeatureMatrix, csv_path: str | Path) -> None:
    """Write a feature matrix as CSV plus a schema sidecar JSON."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    ids = fm.impact_ids or [str(i) for i in range(fm.n)]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["impact_id"] + fm.schema.names())
        for rid, row in zip(ids, fm.values):
            writer.writerow([rid] + [f"{v:.17g}" for v in row])
    sidecar = csv_path.with_suffix(".schema.json")
    doc = {"domain_tag": fm.domain_tag, **fm.schema.to_dict()}
    sidecar.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_features(csv_path: str | Path) -> FeatureMatrix:
    """Read a feature matrix written by :func:`save_features`."""
    csv_path = Path(csv_path)
    sidecar = csv_path.with_suffix(".schema.json")
    if not csv_path.is_file():
        raise DataFormatError(f"feature file not found: {csv_path}")
    if not sidecar.is_file():
        raise DataFormatError(f"schema sidecar not found: {sidecar}")
    doc = json.loads(sidecar.read_text())
    schema = FeatureSchema.from_dict(doc)
    tag = str(doc.get("domain_tag", ""))
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{csv_path}: empty file") from None
        expected = ["impact_id"] + schema.names()
        if header != expected:
            raise DataFormatError(f"{csv_path}: header does not match schema sidecar")
        ids = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DataFormatError(f"{csv_path}: row {lineno} has {len(row)} fields")
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataFormatError(f"{csv_path}: row {lineno}: {exc}") from exc
    values = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(schema)))
    return FeatureMatrix(values, schema, ids, tag)
