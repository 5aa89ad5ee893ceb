"""Per-inference energy model, affine in the effective neuron count.

    E(L_eff, bits, mode) = (alpha * L_eff * mode_factor + gamma) * s(bits) + rho * inactive

alpha and gamma come from a least-squares fit to measured anchor points.
The default anchors are 16-bit figures: 178.56 nJ for a 180-neuron
boundary ELM, 297.61 nJ for a 180-neuron reconstruction ELM and 44.77 nJ
for the adaptive ensemble at a lifetime-average L_eff of 20.42.
"""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence, TextIO

import numpy as np

from .elm import BOUNDARY, MODES, RECONSTRUCTION
from .fixedpoint import MAX_BITS, MIN_BITS


class EnergyError(ValueError):
    pass


@dataclass(frozen=True)
class Anchor:
    l_eff: float
    bits: int
    mode: str
    nj: float


DEFAULT_ANCHORS = (
    Anchor(180.0, 16, BOUNDARY, 178.56),
    Anchor(20.42, 16, BOUNDARY, 44.77),
    Anchor(180.0, 16, RECONSTRUCTION, 297.61),
)


def linear_bit_scale(bits: int) -> float:
    return bits / 16.0


def table_bit_scale(table: Mapping[int, float]) -> Callable[[int], float]:
    """Piecewise-linear s(bits) through the given points."""
    xs = np.array(sorted(table), dtype=float)
    ys = np.array([table[k] for k in sorted(table)], dtype=float)
    if np.any(np.diff(ys) < 0):
        raise EnergyError("bit scale table must be nondecreasing in bits")
    return lambda bits: float(np.interp(bits, xs, ys))


@dataclass
class EnergyModel:
    alpha: float
    gamma: float
    mode_factors: dict = field(default_factory=lambda: {BOUNDARY: 1.0})
    bit_scale: Callable[[int], float] = linear_bit_scale
    rho: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise EnergyError(f"alpha must be positive, got {self.alpha}")
        if self.gamma < 0:
            raise EnergyError(f"gamma must be >= 0, got {self.gamma}")

    def mode_factor(self, mode: str) -> float:
        try:
            return self.mode_factors[mode]
        except KeyError:
            raise EnergyError(f"no calibration for mode {mode!r}") from None


def calibrate(anchors: Sequence[Anchor] = DEFAULT_ANCHORS,
              bit_scale: Callable[[int], float] = linear_bit_scale, rho: float = 0.0) -> EnergyModel:
    """Fit alpha, gamma on boundary-mode anchors; other modes get a multiplier.

    Anchors are first divided by s(bits), so they must be compatible with the
    chosen bit scaling.
    """
    for a in anchors:
        if a.mode not in MODES:
            raise EnergyError(f"unknown mode {a.mode!r}")
    base = [a for a in anchors if a.mode == BOUNDARY]
    if len(base) < 2:
        raise EnergyError("need at least 2 boundary-mode anchors")
    x = np.array([a.l_eff for a in base])
    if np.ptp(x) == 0:
        raise EnergyError("degenerate anchors: all boundary anchors share one L_eff")
    y = np.array([a.nj / bit_scale(a.bits) for a in base])
    A = np.column_stack([x, np.ones_like(x)])
    (alpha, gamma), *_ = np.linalg.lstsq(A, y, rcond=None)
    factors = {BOUNDARY: 1.0}
    for mode in MODES:
        if mode == BOUNDARY:
            continue
        pts = [a for a in anchors if a.mode == mode]
        if pts:
            u = np.array([alpha * a.l_eff for a in pts])
            v = np.array([a.nj / bit_scale(a.bits) - gamma for a in pts])
            factors[mode] = float(u @ v / (u @ u))
    return EnergyModel(float(alpha), float(gamma), factors, bit_scale, rho)


def estimate(model: EnergyModel, l_eff: float, bits: int = 16, mode: str = BOUNDARY,
             inactive: int = 0) -> float:
    """Energy of one inference in nJ."""
    if not MIN_BITS <= bits <= MAX_BITS:
        raise EnergyError(f"bits must be in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    if not l_eff > 0:
        raise EnergyError(f"L_eff must be positive, got {l_eff}")
    return ((model.alpha * l_eff * model.mode_factor(mode) + model.gamma) * model.bit_scale(bits)
            + model.rho * inactive)


@dataclass(frozen=True)
class EnergyReport:
    total_nj: float
    avg_nj_per_sample: float
    baseline_nj: float          # per sample, all learners active, one evaluation
    savings_ratio: float        # baseline_nj / avg_nj_per_sample
    n_samples: int
    n_evaluations: int
    reconstruction_ratio: float | None = None  # same, against the reconstruction ELM


def trace_energy(model: EnergyModel, log, bits: int = 16, mode: str = BOUNDARY) -> EnergyReport:
    """Sum the per-evaluation energy over a monitor log.

    Re-evaluations during escalation are charged separately.  Inactive
    learners cost ``rho`` each per evaluation.
    """
    if not log.records:
        raise EnergyError("empty monitor log")
    total = 0.0
    n_evals = 0
    for rec in log.records:
        for ev in rec.evaluations:
            total += estimate(model, ev.l_eff, bits, mode, inactive=log.n_max - ev.n_bl)
            n_evals += 1
    n = len(log.records)
    full = log.L * log.n_max
    baseline = estimate(model, full, bits, mode)
    avg = total / n
    recon = None
    if RECONSTRUCTION in model.mode_factors:
        recon = estimate(model, full, bits, RECONSTRUCTION) / avg
    return EnergyReport(total, avg, baseline, baseline / avg, n, n_evals, recon)


ENERGY_HEADER = ("total_nj", "avg_nj_per_sample", "baseline_nj", "savings_ratio",
                 "reconstruction_ratio")


def write_energy_csv(fh: TextIO, report: EnergyReport) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(ENERGY_HEADER)
    writer.writerow([repr(report.total_nj), repr(report.avg_nj_per_sample),
                     repr(report.baseline_nj), repr(report.savings_ratio),
                     "" if report.reconstruction_ratio is None else repr(report.reconstruction_ratio)])


def load_anchors(path: str | Path) -> tuple[list[Anchor], Callable[[int], float]]:
    """Read anchors (and an optional bit-scale table) from an INI file::

        [anchor:elm_b]
        l_eff = 180
        bits = 16
        mode = boundary
        nj = 178.56

        [bit_scale]
        8 = 0.5
        16 = 1.0
    """
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise EnergyError(f"cannot read anchor file {path}")
    anchors = []
    for name in parser.sections():
        if name.startswith("anchor:"):
            sec = parser[name]
            anchors.append(Anchor(sec.getfloat("l_eff"), sec.getint("bits"),
                                  sec.get("mode", BOUNDARY), sec.getfloat("nj")))
    scale = linear_bit_scale
    if parser.has_section("bit_scale"):
        scale = table_bit_scale({int(k): float(v) for k, v in parser["bit_scale"].items()})
    if not anchors:
        raise EnergyError(f"{path} defines no [anchor:...] sections")
    return anchors, scale
