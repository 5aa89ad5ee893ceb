"""Anomaly threshold from healthy bearings, and leave-one-out evaluation.

For every healthy bearing X the lifetime maximum T_X of its ensemble score
(median over all learners) is noted; the threshold is

    Thr = max(T) + 0.5 * k * std(T)

with the sample (n - 1) standard deviation.  Leave-one-out: each bearing is
monitored with the threshold computed from the healthy bearings among the
others.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import elm
from .config import RunConfig
from .ensemble import Ensemble
from .fixedpoint import FixedFormat
from .pipeline import BearingData, TrainedBearing, monitor_bearing, train_bearing


class CalibrationError(ValueError):
    pass


def threshold(t_values: Sequence[float], k: float = 1.0) -> float:
    t = np.asarray(t_values, dtype=float)
    if t.size < 2:
        raise CalibrationError(f"need at least 2 healthy-bearing values, got {t.size}")
    return float(t.max() + 0.5 * k * t.std(ddof=1))


@dataclass(frozen=True)
class ThresholdCalib:
    t_values: dict
    k: float
    max_err: float
    sigma: float
    thr: float

    @classmethod
    def from_values(cls, t_values: dict, k: float = 1.0) -> "ThresholdCalib":
        t = np.array(list(t_values.values()), dtype=float)
        thr = threshold(t, k)
        return cls(dict(t_values), k, float(t.max()), float(t.std(ddof=1)), thr)


def lifetime_max_error(ensemble: Ensemble, stream: Iterable | np.ndarray,
                       fmt: FixedFormat | None = None) -> float:
    """Max over the stream of the median score of all learners."""
    X = np.array([np.asarray(getattr(x, "values", x), dtype=float) for x in stream])
    if X.size == 0:
        raise CalibrationError("empty stream")
    errors = np.column_stack([elm.score_batch(X, m, fmt) for m in ensemble.learners])
    return float(np.max(np.median(errors, axis=1)))


@dataclass(frozen=True)
class BearingOutcome:
    replica: int
    bearing_id: str
    label: int
    fault_declared: bool
    fault_sample_index: int | None  # position in the bearing's life
    thr_used: float
    avg_l_eff: float
    train_end: int

    @property
    def correct(self) -> bool:
        return self.fault_declared == bool(self.label)


@dataclass
class AccuracyReport:
    outcomes: list[BearingOutcome] = field(default_factory=list)
    folds: list[tuple[int, str, ThresholdCalib]] = field(default_factory=list)
    logs: dict = field(default_factory=dict)   # (replica, bearing_id) -> MonitorLog

    @property
    def accuracy(self) -> float:
        """Mean over replicas of the fraction of correctly classified bearings."""
        per = {}
        for o in self.outcomes:
            per.setdefault(o.replica, []).append(o.correct)
        return float(np.mean([np.mean(v) for v in per.values()]))

    @property
    def mean_l_eff(self) -> float:
        return float(np.mean([o.avg_l_eff for o in self.outcomes]))


def fold_thresholds(trained: Sequence[TrainedBearing], k: float) -> dict[str, ThresholdCalib]:
    """Leave-one-out threshold for every bearing."""
    folds = {}
    for test in trained:
        goods = {t.data.bearing_id: t.lifetime_max_error for t in trained
                 if t is not test and t.data.label == 0}
        if len(goods) < 2:
            raise CalibrationError(
                f"fold {test.data.bearing_id}: only {len(goods)} healthy bearing(s) left, need 2")
        folds[test.data.bearing_id] = ThresholdCalib.from_values(goods, k)
    return folds


def loo_evaluate(bearings: Sequence[BearingData], config: RunConfig) -> AccuracyReport:
    """Leave-one-out accuracy of the full train/calibrate/monitor pipeline.

    A bearing counts as correct when a fault is declared iff its label is 1.
    Repeated for ``config.replicas`` ensemble seeds.
    """
    if len(bearings) < 2:
        raise CalibrationError("need at least 2 bearings")
    report = AccuracyReport()
    for replica in range(config.replicas):
        trained = [train_bearing(b, config, replica) for b in bearings]
        folds = fold_thresholds(trained, config.k)
        for t in trained:
            calib = folds[t.data.bearing_id]
            log = monitor_bearing(t, calib.thr, config)
            report.outcomes.append(BearingOutcome(
                replica, t.data.bearing_id, t.data.label, log.fault_declared, log.fault_index, calib.thr,
                log.mean_l_eff, t.train_end))
            report.folds.append((replica, t.data.bearing_id, calib))
            report.logs[replica, t.data.bearing_id] = log
    return report


ACCURACY_HEADER = ("replica", "bearing_id", "label", "fault_declared", "fault_sample_index",
                   "thr_used", "avg_l_eff")


def write_accuracy_csv(fh: TextIO, report: AccuracyReport) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(ACCURACY_HEADER)
    for o in report.outcomes:
        writer.writerow((o.replica, o.bearing_id, o.label, int(o.fault_declared),
                         "" if o.fault_sample_index is None else o.fault_sample_index,
                         repr(o.thr_used), repr(o.avg_l_eff)))


def write_threshold_csv(fh: TextIO, folds: dict[str, ThresholdCalib]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("fold_bearing_id", "thr", "max_err", "sigma_err", "k", "n_good"))
    for bid, c in folds.items():
        writer.writerow((bid, repr(c.thr), repr(c.max_err), repr(c.sigma), repr(c.k),
                         len(c.t_values)))


def read_threshold_csv(fh: TextIO) -> dict[str, float]:
    return {row["fold_bearing_id"]: float(row["thr"]) for row in csv.DictReader(fh)}


def write_tx_csv(fh: TextIO, trained: Sequence[TrainedBearing]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("bearing_id", "label", "t_x", "train_end"))
    for t in trained:
        writer.writerow((t.data.bearing_id, t.data.label, repr(t.lifetime_max_error), t.train_end))
