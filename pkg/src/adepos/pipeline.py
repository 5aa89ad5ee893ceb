"""Per-bearing train-then-monitor pipeline and bearing data sources.

Each bearing gets its own normalizer and ensemble, learned from the start of
its own life: the normalizer from the first ``norm_windows`` snapshots, the
ensemble from the first snapshots until every learner has converged.  The
rest of the life is monitored.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import controller, elm
from .config import RunConfig, derive_seed, ensemble_seed
from .ensemble import Ensemble, VoteResult, train_ensemble, vote
from .features import Normalizer, extract, extract_batch, fit_normalizer
from .ingest import (BearingEntry, BearingManifest, Layout, SynthSpec, stream_bearing,
                     synth_matrix, write_bearing_dir, write_manifest, SampleWindow)


@dataclass
class BearingData:
    bearing_id: str
    label: int
    features: np.ndarray          # raw features, n_windows x 5
    onset: int | None = None      # known degradation onset (synthetic data only)

    def __len__(self):
        return self.features.shape[0]


def load_bearing(manifest: BearingManifest, bearing_id: str) -> BearingData:
    feats = np.array([extract(w).values for w in stream_bearing(manifest, bearing_id)])
    return BearingData(bearing_id, manifest[bearing_id].label, feats)


def load_manifest_data(manifest: BearingManifest) -> list[BearingData]:
    return [load_bearing(manifest, b) for b in manifest.bearing_ids]


# ---------------------------------------------------------------- synthetic sets

@dataclass(frozen=True)
class SynthSet:
    """Layout of a synthetic experiment: healthy bearings run the whole
    trace without degrading, degrading ones ramp up from ``onset``."""

    n_healthy: int = 8
    n_degrading: int = 4
    n_windows: int = 6400
    onset: int = 6000
    amp_growth: float = 0.003
    impulse_growth: float = 0.02
    window_size: int = 256


def synthetic_specs(seed: int, layout: SynthSet = SynthSet()) -> list[tuple[SynthSpec, int]]:
    specs = []
    for i in range(layout.n_healthy + layout.n_degrading):
        degrading = i >= layout.n_healthy
        bid = f"{'d' if degrading else 'h'}{i:02d}"
        spec = SynthSpec(n_windows=layout.n_windows,
                         onset=layout.onset if degrading else None,
                         amp_growth=layout.amp_growth if degrading else 0.0,
                         impulse_growth=layout.impulse_growth if degrading else 0.0,
                         seed=derive_seed(seed, "synth", bid),
                         window_size=layout.window_size, bearing_id=bid)
        specs.append((spec, int(degrading)))
    return specs


def synthetic_data(seed: int, layout: SynthSet = SynthSet()) -> list[BearingData]:
    return [BearingData(spec.bearing_id, label, extract_batch(synth_matrix(spec)), spec.onset)
            for spec, label in synthetic_specs(seed, layout)]


def write_synthetic_dataset(directory: str | Path, seed: int,
                            layout: SynthSet = SynthSet()) -> Path:
    """Write snapshot files plus ``manifest.ini``; returns the manifest path."""
    directory = Path(directory)
    entries = []
    for spec, label in synthetic_specs(seed, layout):
        windows = [SampleWindow(row, spec.rate, i, spec.bearing_id)
                   for i, row in enumerate(synth_matrix(spec))]
        write_bearing_dir(directory / spec.bearing_id, windows)
        entries.append(BearingEntry(spec.bearing_id, label, directory / spec.bearing_id,
                                    (0,), Layout(1), spec.rate))
    path = directory / "manifest.ini"
    write_manifest(BearingManifest(tuple(entries)), path)
    return path


# ---------------------------------------------------------------- training

@dataclass
class TrainedBearing:
    data: BearingData
    normalizer: Normalizer
    ensemble: Ensemble
    X: np.ndarray            # normalized features
    errors: np.ndarray       # n_windows x N anomaly scores, inference arithmetic
    train_end: int           # first monitored sample

    @property
    def lifetime_max_error(self) -> float:
        return float(np.max(np.median(self.errors, axis=1)))

    @property
    def monitor_X(self) -> np.ndarray:
        return self.X[self.train_end:]


def train_bearing(data: BearingData, config: RunConfig, replica: int = 0) -> TrainedBearing:
    n_norm = min(config.norm_windows, len(data))
    normalizer = fit_normalizer(data.features[:n_norm])
    X = normalizer.transform(data.features)
    base = ensemble_seed(config.seed, data.bearing_id, replica, config.n_max)
    ens = train_ensemble(X, config.train_config(), base)
    ens.normalizer = normalizer
    fmt = config.fixed_format()
    errors = np.column_stack([elm.score_batch(X, m, fmt) for m in ens.learners])
    return TrainedBearing(data, normalizer, ens, X, errors, ens.training_samples)


def restore_bearing(data: BearingData, ensemble: Ensemble, config: RunConfig) -> TrainedBearing:
    """Rebuild a `TrainedBearing` from a saved ensemble, without retraining."""
    if ensemble.normalizer is None:
        raise ValueError("saved ensemble carries no normalizer")
    X = ensemble.normalizer.transform(data.features)
    fmt = config.fixed_format()
    errors = np.column_stack([elm.score_batch(X, m, fmt) for m in ensemble.learners])
    return TrainedBearing(data, ensemble.normalizer, ensemble, X, errors, ensemble.training_samples)


class ScoredEnsemble:
    """Ensemble view over precomputed scores, indexed by sample position.

    Gives the same votes as `Ensemble.evaluate` on the corresponding inputs;
    used to run the controller over long traces without rescoring.
    """

    def __init__(self, errors: np.ndarray, threshold: float, L: int):
        self.errors = np.asarray(errors)
        self.threshold = threshold
        self.L = L
        self.N = self.errors.shape[1]

    def evaluate(self, index: int, active_count: int, fmt=None) -> VoteResult:
        errs = self.errors[index, :active_count]
        return vote(errs > self.threshold, errs)


def monitor_bearing(trained: TrainedBearing, threshold: float, config: RunConfig) -> controller.MonitorLog:
    """Run the controller over the monitored part of a trained bearing."""
    view = ScoredEnsemble(trained.errors[trained.train_end:], threshold, trained.ensemble.L)
    return controller.run(view, range(len(trained.data) - trained.train_end),
                          n_max=config.n_max, n_min=config.n_min, start=trained.train_end)
