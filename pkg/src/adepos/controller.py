"""Anomaly-driven scaling of the active ensemble (ADEPOS controller).

Monitoring starts with every base learner active.  A healthy verdict drops
two learners (down to ``n_min``); an alarm adds two learners and the same
sample is evaluated again; an alarm with all ``n_max`` learners active is a
fault, after which the controller stops.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .fixedpoint import FixedFormat

HEALTHY = "healthy"
FAULT = "fault"


class ControllerError(RuntimeError):
    pass


@dataclass
class ControllerState:
    n_bl: int
    n_min: int = 1
    n_max: int = 9
    fault_declared: bool = False
    evaluations: int = 0

    def __post_init__(self):
        for name in ("n_bl", "n_min", "n_max"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise ControllerError(f"{name} must be a positive odd number, got {v}")
        if not self.n_min <= self.n_bl <= self.n_max:
            raise ControllerError(
                f"need n_min <= n_bl <= n_max, got {self.n_min}, {self.n_bl}, {self.n_max}")

    @classmethod
    def start(cls, n_max: int, n_min: int = 1) -> "ControllerState":
        """Initial state: every learner active."""
        return cls(n_bl=n_max, n_min=n_min, n_max=n_max)


@dataclass(frozen=True)
class Evaluation:
    n_bl: int
    l_eff: int
    majority: bool
    max_err: float


@dataclass(frozen=True)
class SampleRecord:
    index: int
    timestamp: int
    evaluations: tuple[Evaluation, ...]
    verdict: str

    @property
    def n_bl_final(self) -> int:
        return self.evaluations[-1].n_bl

    @property
    def n_evaluations(self) -> int:
        return len(self.evaluations)

    @property
    def l_eff_values(self) -> list[int]:
        return [e.l_eff for e in self.evaluations]

    @property
    def l_eff_sum(self) -> int:
        return sum(e.l_eff for e in self.evaluations)

    @property
    def max_err(self) -> float:
        return max(e.max_err for e in self.evaluations)


@dataclass
class MonitorLog:
    L: int
    n_max: int
    records: list[SampleRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def fault_declared(self) -> bool:
        return bool(self.records) and self.records[-1].verdict == FAULT

    @property
    def fault_index(self) -> int | None:
        return self.records[-1].index if self.fault_declared else None

    @property
    def l_eff_trace(self) -> list[int]:
        return [v for r in self.records for v in r.l_eff_values]

    @property
    def mean_l_eff(self) -> float:
        """Average effective neuron count over every evaluation made."""
        trace = self.l_eff_trace
        return float(np.mean(trace)) if trace else 0.0

    @property
    def l_eff_per_sample(self) -> float:
        """Neurons evaluated per input sample, re-evaluations included."""
        return sum(r.l_eff_sum for r in self.records) / len(self.records) if self.records else 0.0

    @property
    def n_evaluations(self) -> int:
        return sum(r.n_evaluations for r in self.records)


def step(state: ControllerState, ensemble, x, fmt: FixedFormat | None = None):
    """Decide one sample.  Returns ``(verdict, state, evaluations)``.

    *ensemble* needs ``L`` and ``evaluate(x, active_count, fmt)`` returning an
    object with ``majority`` (and optionally ``errors``).
    """
    if state.fault_declared:
        raise ControllerError("a fault was already declared, the controller has stopped")
    evaluations = []
    while True:
        result = ensemble.evaluate(x, state.n_bl, fmt)
        state.evaluations += 1
        errs = getattr(result, "errors", ())
        evaluations.append(Evaluation(state.n_bl, ensemble.L * state.n_bl, bool(result.majority),
                                      float(max(errs)) if len(errs) else float("nan")))
        if not result.majority:
            state.n_bl = max(state.n_bl - 2, state.n_min)
            return HEALTHY, state, evaluations
        if state.n_bl >= state.n_max:
            state.fault_declared = True
            return FAULT, state, evaluations
        state.n_bl = min(state.n_bl + 2, state.n_max)


def run(ensemble, stream: Iterable, n_max: int | None = None, n_min: int = 1,
        fmt: FixedFormat | None = None, start: int = 0) -> MonitorLog:
    """Feed *stream* through the controller until a fault or the end of the stream.

    Records are numbered from *start*, e.g. the first monitored position in
    a bearing's life.
    """
    n_max = ensemble.N if n_max is None else n_max
    state = ControllerState.start(n_max, n_min)
    log = MonitorLog(ensemble.L, n_max)
    for i, x in enumerate(stream):
        verdict, state, evals = step(state, ensemble, x, fmt)
        stamp = int(getattr(x, "timestamp", start + i))
        log.records.append(SampleRecord(start + i, stamp, tuple(evals), verdict))
        if verdict == FAULT:
            break
    if not log.records:
        raise ControllerError("empty monitoring stream")
    return log


LOG_HEADER = ("sample_index", "n_bl_final", "n_evaluations", "l_eff_sum", "verdict", "max_err")


def write_log_csv(fh: TextIO, log: MonitorLog) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(LOG_HEADER)
    for r in log.records:
        writer.writerow((r.index, r.n_bl_final, r.n_evaluations, r.l_eff_sum, r.verdict,
                         repr(r.max_err)))


def read_log_csv(fh: TextIO, L: int, n_max: int) -> MonitorLog:
    """Rebuild a log from its CSV.  Per-evaluation detail is reconstructed
    from the escalation rule (each re-evaluation adds two learners)."""
    log = MonitorLog(L, n_max)
    for row in csv.DictReader(fh):
        n_final, n_evals = int(row["n_bl_final"]), int(row["n_evaluations"])
        levels = [n_final - 2 * (n_evals - 1 - k) for k in range(n_evals)]
        if sum(L * n for n in levels) != int(row["l_eff_sum"]):
            raise ControllerError(f"row {row['sample_index']}: l_eff_sum disagrees with levels")
        evals = tuple(Evaluation(n, L * n, k < n_evals - 1 or row["verdict"] == FAULT,
                                 float(row["max_err"])) for k, n in enumerate(levels))
        log.records.append(SampleRecord(int(row["sample_index"]), int(row["sample_index"]),
                                        evals, row["verdict"]))
    return log
