"""Time-domain condition indicators and z-score normalization."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .ingest import SampleWindow

FEATURE_NAMES = ("rms", "kurtosis", "peak_to_peak", "crest_factor", "skewness")
N_FEATURES = len(FEATURE_NAMES)


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    timestamp: int = 0
    bearing_id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (N_FEATURES,):
            raise FeatureError(f"expected {N_FEATURES} features, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise FeatureError("feature values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return N_FEATURES

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def extract_batch(samples: np.ndarray) -> np.ndarray:
    """Features of each row of an n_windows x n_samples array, n_windows x 5.

    Moments use the population convention and kurtosis is non-excess, so a
    Gaussian window gives roughly 3.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.shape[1] < 4:
        raise FeatureError(f"need at least 4 samples per window, got {x.shape[1]}")
    centered = x - x.mean(axis=1, keepdims=True)
    c2 = centered * centered
    var = c2.mean(axis=1)
    peak = np.max(np.abs(x), axis=1)
    # relative test: a constant window can leave rounding residue in var
    flat = var <= (1e-12 * np.maximum(peak, 1e-300)) ** 2
    if np.any(flat):
        raise FeatureError(f"zero-variance window(s) at row(s) {np.flatnonzero(flat)[:5].tolist()}, "
                           "kurtosis and skewness are undefined")
    rms = np.sqrt(np.einsum("ij,ij->i", x, x) / x.shape[1])
    return np.column_stack([
        rms,
        np.einsum("ij,ij->i", c2, c2) / x.shape[1] / var ** 2,
        x.max(axis=1) - x.min(axis=1),
        peak / rms,
        np.einsum("ij,ij->i", c2, centered) / x.shape[1] / var ** 1.5,
    ])


def extract(window: SampleWindow | np.ndarray) -> FeatureVector:
    """RMS, kurtosis, peak-to-peak, crest factor and skewness of one window."""
    if isinstance(window, SampleWindow):
        x, ts, bid = window.samples, window.timestamp, window.bearing_id
    else:
        x, ts, bid = np.asarray(window, dtype=float), 0, ""
    if x.ndim != 1:
        raise FeatureError("extract takes a single 1-d window, use extract_batch for arrays")
    if x.size < 4:
        raise FeatureError(f"need at least 4 samples, got {x.size}")
    return FeatureVector(extract_batch(x[None, :])[0], ts, bid)


def feature_matrix(features: Iterable[FeatureVector]) -> np.ndarray:
    return np.array([f.values for f in features], dtype=float).reshape(-1, N_FEATURES)


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray
    count: int

    def __post_init__(self):
        if np.any(~(np.asarray(self.std) > 0)):
            raise FeatureError("normalizer standard deviations must be positive")

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.std

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std],
                "count": int(self.count)}

    @classmethod
    def from_dict(cls, data: dict) -> "Normalizer":
        return cls(np.array(data["mean"], dtype=float), np.array(data["std"], dtype=float),
                   int(data["count"]))


def fit_normalizer(features: Sequence[FeatureVector] | np.ndarray) -> Normalizer:
    """Per-feature mean and sample (n-1) standard deviation."""
    X = features if isinstance(features, np.ndarray) else feature_matrix(features)
    if X.shape[0] < 2:
        raise FeatureError(f"need at least 2 feature vectors to fit, got {X.shape[0]}")
    std = X.std(axis=0, ddof=1)
    degenerate = [FEATURE_NAMES[i] for i in np.flatnonzero(~(std > 0))]
    if degenerate:
        raise FeatureError(f"degenerate variance for feature(s) {degenerate}")
    return Normalizer(X.mean(axis=0), std, X.shape[0])


def apply_normalizer(n: Normalizer | None, f: FeatureVector) -> FeatureVector:
    if n is None:
        raise FeatureError("normalizer has not been fitted")
    return FeatureVector(n.transform(f.values), f.timestamp, f.bearing_id)


def write_feature_csv(fh: TextIO, features: Iterable[FeatureVector]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("timestamp", "bearing_id") + FEATURE_NAMES)
    for f in features:
        writer.writerow([f.timestamp, f.bearing_id] + [repr(float(v)) for v in f.values])
