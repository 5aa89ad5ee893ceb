"""Accuracy and energy tables over a grid of network sizes and bit widths.

Each cell is a static ensemble: the first ``n_bl`` learners of an ensemble
trained with the largest learner count used for that L, always all active.
A bearing is declared faulty at the first monitored sample where a strict
majority of those learners flags it, which is what the controller does
with ``n_min == n_max``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Sequence, TextIO

import numpy as np

from . import elm
from .calibration import CalibrationError, threshold
from .config import RunConfig
from .energy import EnergyModel, estimate
from .fixedpoint import MAX_BITS, MIN_BITS, FixedFormat
from .pipeline import BearingData, train_bearing


class SweepError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    L: tuple[int, ...] = (20, 30, 40)
    n_bl: tuple[int, ...] = (9, 7, 5)     # largest learner count per L
    bits: tuple[int, ...] = (8, 12, 16)

    def __post_init__(self):
        if not self.L or not self.bits or not self.n_bl:
            raise SweepError("empty grid")
        if len(self.n_bl) != len(self.L):
            raise SweepError(f"need one learner count per L, got {len(self.n_bl)} for {len(self.L)}")
        for n in self.n_bl:
            if n < 1 or n % 2 == 0:
                raise SweepError(f"learner counts must be positive odd numbers, got {n}")
        for b in self.bits:
            if not MIN_BITS <= b <= MAX_BITS:
                raise SweepError(f"bits must be in [{MIN_BITS}, {MAX_BITS}], got {b}")

    def cells(self):
        for L, top in zip(self.L, self.n_bl):
            for n in range(1, top + 1, 2):
                for bits in self.bits:
                    yield L, n, bits


@dataclass(frozen=True)
class AccuracyCell:
    L: int
    n_bl: int
    bits: int
    replicas: int
    mean_accuracy: float

    @property
    def l_eff(self) -> int:
        return self.L * self.n_bl


def static_fault_index(errors: np.ndarray, thr: float, start: int = 0) -> int | None:
    """First row (from *start*) where a strict majority of columns exceeds *thr*."""
    flags = np.asarray(errors)[start:] > thr
    hit = np.flatnonzero(flags.sum(axis=1) > flags.shape[1] / 2)
    return None if hit.size == 0 else start + int(hit[0])


def _loo_correct(errs: list[np.ndarray], labels: Sequence[int], starts: Sequence[int],
                 k: float) -> list[bool]:
    t_x = [float(np.max(np.median(e, axis=1))) for e in errs]
    out = []
    for i, (e, label, s) in enumerate(zip(errs, labels, starts)):
        goods = [t for j, t in enumerate(t_x) if j != i and labels[j] == 0]
        if len(goods) < 2:
            raise CalibrationError(f"fold {i}: only {len(goods)} healthy bearing(s) left, need 2")
        faulted = static_fault_index(e, threshold(goods, k), s) is not None
        out.append(faulted == bool(label))
    return out


def sweep_accuracy(bearings: Sequence[BearingData], config: RunConfig,
                   grid: Grid = Grid()) -> list[AccuracyCell]:
    """Leave-one-out accuracy per (L, n_bl, bits) cell, averaged over replicas."""
    labels = [b.label for b in bearings]
    acc: dict[tuple[int, int, int], list[float]] = {}
    for L, top in zip(grid.L, grid.n_bl):
        cfg = replace(config, L=L, n_max=top, n_min=1)
        for replica in range(config.replicas):
            trained = [train_bearing(b, cfg, replica) for b in bearings]
            starts = [t.train_end for t in trained]
            for bits in grid.bits:
                fmt = FixedFormat(bits)
                scores = [np.column_stack([elm.score_batch(t.X, m, fmt) for m in t.ensemble.learners])
                          for t in trained]
                for n in range(1, top + 1, 2):
                    ok = _loo_correct([s[:, :n] for s in scores], labels, starts, config.k)
                    acc.setdefault((L, n, bits), []).append(float(np.mean(ok)))
    return [AccuracyCell(L, n, bits, len(acc[L, n, bits]), float(np.mean(acc[L, n, bits])))
            for L, n, bits in grid.cells()]


@dataclass(frozen=True)
class EnergyCell:
    L: int
    n_bl: int
    bits: int
    nj_per_inference: float
    relative: float        # against the largest L_eff of the grid at the widest bit width


def sweep_energy(model: EnergyModel, grid: Grid = Grid(), mode: str = elm.BOUNDARY) -> list[EnergyCell]:
    cells = list(grid.cells())
    ref = estimate(model, max(L * n for L, n, _ in cells), max(grid.bits), mode)
    return [EnergyCell(L, n, bits, e, e / ref)
            for L, n, bits in cells
            for e in [estimate(model, L * n, bits, mode)]]


def write_accuracy_grid(fh: TextIO, cells: Sequence[AccuracyCell]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("L", "n_bl", "l_eff", "bits", "replicas", "mean_accuracy"))
    for c in cells:
        writer.writerow((c.L, c.n_bl, c.l_eff, c.bits, c.replicas, repr(c.mean_accuracy)))


def write_energy_grid(fh: TextIO, cells: Sequence[EnergyCell]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("L", "n_bl", "l_eff", "bits", "nj_per_inference", "relative_energy"))
    for c in cells:
        writer.writerow((c.L, c.n_bl, c.L * c.n_bl, c.bits, repr(c.nj_per_inference),
                         repr(c.relative)))
