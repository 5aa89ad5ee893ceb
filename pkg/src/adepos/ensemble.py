"""Ensemble of ELM base learners with majority voting over an active prefix."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import elm
from .elm import RECONSTRUCTION, ElmModel, OpiumState
from .features import Normalizer
from .fixedpoint import FixedFormat

SEED_STRIDE = 0x9E37
ENSEMBLE_FORMAT = "adepos-ensemble"
ENSEMBLE_VERSION = 1


class EnsembleError(ValueError):
    pass


class NotConvergedError(EnsembleError):
    pass


def learner_seed(base_seed: int, index: int) -> int:
    """16-bit LFSR seed of learner *index*: base XOR (index+1) * 0x9E37.

    0x9E37 is odd, so the masked multiples are distinct for every index below
    2**16 and distinct indices get distinct seeds.
    """
    seed = (int(base_seed) ^ ((index + 1) * SEED_STRIDE)) & 0xFFFF
    if seed == 0:
        raise EnsembleError(f"base seed {base_seed:#x} yields a zero LFSR seed for learner {index}")
    return seed


def safe_base_seed(candidate: int, n: int) -> int:
    """Smallest base seed >= candidate (mod 2**16) whose n learner seeds are nonzero."""
    forbidden = {((i + 1) * SEED_STRIDE) & 0xFFFF for i in range(n)}
    seed = int(candidate) & 0xFFFF
    while seed in forbidden:
        seed = (seed + 1) & 0xFFFF
    return seed


@dataclass
class TrainConfig:
    n_learners: int = 9
    L: int = 20
    d: int = 5
    mode: str = elm.BOUNDARY
    c: float = 100.0
    n0: int | None = None  # default: L
    window: int = 50       # convergence window M
    tol: float = 1e-3      # convergence tolerance epsilon
    max_samples: int | None = None
    target: float = 1.0


@dataclass(frozen=True)
class VoteResult:
    flags: tuple[bool, ...]
    active_count: int
    majority: bool
    errors: tuple[float, ...] = ()

    @property
    def n_flags(self) -> int:
        return sum(self.flags)


@dataclass(eq=False)
class Ensemble:
    learners: list[ElmModel]
    base_seed: int
    threshold: float | None = None
    normalizer: Normalizer | None = None
    states: list[OpiumState] | None = field(default=None, repr=False)
    converged_at: list[int | None] = field(default_factory=list)
    training_samples: int = 0

    def __post_init__(self):
        n = len(self.learners)
        if n < 1 or n % 2 == 0:
            raise EnsembleError(f"ensemble size must be odd and positive, got {n}")
        first = self.learners[0]
        if any((m.L, m.d, m.mode) != (first.L, first.d, first.mode) for m in self.learners):
            raise EnsembleError("all learners must share L, d and mode")
        seeds = [m.seed for m in self.learners]
        if len(set(seeds)) != n:
            raise EnsembleError("learner seeds must be pairwise distinct")

    @property
    def N(self) -> int:
        return len(self.learners)

    @property
    def L(self) -> int:
        return self.learners[0].L

    @property
    def mode(self) -> str:
        return self.learners[0].mode

    def errors(self, x, active_count: int | None = None, fmt: FixedFormat | None = None) -> np.ndarray:
        """Anomaly scores of the first *active_count* learners."""
        k = self.N if active_count is None else active_count
        return np.array([elm.score(x, m, fmt) for m in self.learners[:k]])

    def evaluate(self, x, active_count: int, fmt: FixedFormat | None = None) -> VoteResult:
        return evaluate(self, x, active_count, fmt)

    def to_dict(self) -> dict:
        return {
            "format": ENSEMBLE_FORMAT, "version": ENSEMBLE_VERSION,
            "base_seed": int(self.base_seed), "N": self.N, "L": self.L,
            "threshold": None if self.threshold is None else float(self.threshold),
            "normalizer": None if self.normalizer is None else self.normalizer.to_dict(),
            "converged_at": list(self.converged_at),
            "training_samples": int(self.training_samples),
            "learners": [m.to_dict() for m in self.learners],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Ensemble":
        if data.get("format") != ENSEMBLE_FORMAT or data.get("version") != ENSEMBLE_VERSION:
            raise EnsembleError(f"not an {ENSEMBLE_FORMAT} v{ENSEMBLE_VERSION} record")
        learners = [ElmModel.from_dict(r) for r in data["learners"]]
        if len(learners) != data["N"] or any(m.L != data["L"] for m in learners):
            raise EnsembleError("ensemble header disagrees with its learner records")
        norm = data.get("normalizer")
        return cls(learners, int(data["base_seed"]), data.get("threshold"),
                   Normalizer.from_dict(norm) if norm else None,
                   converged_at=list(data.get("converged_at", [])),
                   training_samples=int(data.get("training_samples", 0)))


def dumps(ensemble: Ensemble) -> str:
    return json.dumps(ensemble.to_dict(), indent=1, sort_keys=True) + "\n"


def save_ensemble(ensemble: Ensemble, path: str | Path) -> None:
    Path(path).write_text(dumps(ensemble), encoding="utf-8")


def load_ensemble(path: str | Path) -> Ensemble:
    return Ensemble.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_ensemble(stream: Iterable, config: TrainConfig, base_seed: int) -> Ensemble:
    """Bootstrap and OPIUM-train N learners on the same normalized sample stream.

    The first N0 samples bootstrap every learner; the rest are fed one at a
    time to all learners until every one of them has converged.  Raises
    ``NotConvergedError`` if ``config.max_samples`` (or the stream) runs out
    first.  The learners are updated together on stacked arrays; the result
    matches per-learner ``elm.opium_update`` calls up to float rounding.
    """
    if config.n_learners < 1 or config.n_learners % 2 == 0:
        raise EnsembleError(f"ensemble size must be odd, got {config.n_learners}")
    n0 = config.L if config.n0 is None else config.n0
    learners = [ElmModel(config.L, config.d, config.mode, learner_seed(base_seed, i),
                         target=config.target) for i in range(config.n_learners)]
    it = iter(stream)
    boot = []
    for x in it:
        boot.append(np.asarray(getattr(x, "values", x), dtype=float))
        if len(boot) == n0:
            break
    if len(boot) < n0:
        raise EnsembleError(f"stream ended after {len(boot)} samples, bootstrap needs {n0}")
    states = [elm.opium_init(boot, m, config.c) for m in learners]

    W = np.stack([m.W for m in learners])          # N x L x d
    b = np.stack([m.b for m in learners])          # N x L
    beta = np.stack([m.beta for m in learners])    # N x out x L
    theta = np.stack([s.theta for s in states])    # N x L x L
    recent = np.zeros((config.n_learners, config.window))
    one = np.array([config.target])
    converged_at: list[int | None] = [None] * config.n_learners
    seen = n0
    updates = 0
    cap = config.max_samples
    for x in it:
        if cap is not None and seen >= cap:
            break
        x = np.asarray(getattr(x, "values", x), dtype=float)
        target = x if config.mode == RECONSTRUCTION else one
        h = np.maximum(W @ x + b, 0.0)                        # N x L
        t = np.einsum("nij,nj->ni", theta, h)
        denom = 1.0 + np.einsum("ni,ni->n", h, t)
        if not np.all(denom > 0) or not np.isfinite(denom.sum()):
            raise elm.DivergenceError("OPIUM denominator is not positive")
        eta = t / denom[:, None]
        err = target[None, :] - np.einsum("noj,nj->no", beta, h)
        delta = err[:, :, None] * eta[:, None, :]
        beta = beta + delta
        theta = theta - t[:, :, None] * t[:, None, :] / denom[:, None, None]
        sq = np.einsum("noj,noj->n", beta, beta)
        if not (np.isfinite(sq.sum()) and np.isfinite(theta.sum())):
            raise elm.DivergenceError("non-finite value in OPIUM update")
        norms = np.sqrt(sq)
        rel = np.divide(np.sqrt(np.einsum("noj,noj->n", delta, delta)), norms,
                        out=np.zeros_like(norms), where=norms > 0)
        recent[:, updates % config.window] = rel
        updates += 1
        seen += 1
        if updates >= config.window:
            done = recent.mean(axis=1) < config.tol
            for i in np.flatnonzero(done):
                if converged_at[i] is None:
                    converged_at[i] = seen
            if all(c is not None for c in converged_at):
                break

    oldest = updates % config.window if updates >= config.window else 0
    for i, (m, s) in enumerate(zip(learners, states)):
        m.beta = beta[i].copy()
        s.theta = theta[i].copy()
        s.samples_seen = seen
        s.history.extend(recent[i, (oldest + j) % config.window]
                         for j in range(min(updates, config.window)))
    if any(c is None for c in converged_at):
        lagging = [i for i, c in enumerate(converged_at) if c is None]
        raise NotConvergedError(
            f"learner(s) {lagging} not converged after {seen} samples")
    return Ensemble(learners, base_seed, states=states, converged_at=converged_at,
                    training_samples=seen)


def evaluate(ensemble: Ensemble, x, active_count: int, fmt: FixedFormat | None = None) -> VoteResult:
    """Majority vote of learners 0..active_count-1; flag means score > threshold."""
    if active_count % 2 == 0 or not 1 <= active_count <= ensemble.N:
        raise EnsembleError(f"active count must be odd and in [1, {ensemble.N}], got {active_count}")
    if ensemble.threshold is None:
        raise EnsembleError("ensemble has no threshold, calibrate it first")
    errs = ensemble.errors(x, active_count, fmt)
    return vote(errs > ensemble.threshold, errs)


def vote(flags: Sequence[bool], errors: Sequence[float] = ()) -> VoteResult:
    flags = tuple(bool(f) for f in flags)
    return VoteResult(flags, len(flags), sum(flags) > len(flags) / 2, tuple(float(e) for e in errors))
