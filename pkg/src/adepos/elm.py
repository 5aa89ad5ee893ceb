"""Extreme learning machine base learner for one-class classification.

The input layer (W, b) comes from a 16-bit LFSR so it can be regenerated
from its seed instead of stored.  Only the output weights are learned, with
the OPIUM recursion (rank-1 recursive least squares).  Two one-class modes:

* boundary: one output trained towards a constant target (1.0); the anomaly
  score is ``|y - target|``;
* reconstruction: d outputs trained to reproduce the input; the score is the
  RMS reconstruction error.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fixedpoint as fxp

BOUNDARY = "boundary"
RECONSTRUCTION = "reconstruction"
MODES = (BOUNDARY, RECONSTRUCTION)

MODEL_FORMAT = "adepos-elm"
MODEL_VERSION = 1


class ElmError(ValueError):
    pass


class DivergenceError(ElmError, ArithmeticError):
    pass


# ---------------------------------------------------------------- PRBS

class Lfsr:
    """Fibonacci LFSR, x^16 + x^15 + x^13 + x^4 + 1 (maximal length)."""

    taps = (16, 15, 13, 4)
    width = 16

    def __init__(self, seed: int):
        seed = int(seed) & 0xFFFF
        if seed == 0:
            raise ElmError("LFSR seed must be nonzero in its low 16 bits")
        self.state = seed
        self.words_emitted = 0
        # tap k of the polynomial reads register bit (width - k)
        self._shifts = tuple(self.width - t for t in self.taps)

    def step(self) -> int:
        s = self.state
        bit = 0
        for sh in self._shifts:
            bit ^= s >> sh
        self.state = (s >> 1) | ((bit & 1) << (self.width - 1))
        return self.state

    def word(self) -> int:
        """Clock 16 times and return the register as a fresh 16-bit word."""
        for _ in range(self.width):
            self.step()
        self.words_emitted += 1
        return self.state

    def words(self, n: int) -> np.ndarray:
        return np.array([self.word() for _ in range(n)], dtype=np.int64)


def words_to_weights(words: np.ndarray) -> np.ndarray:
    """Two's complement reading of each 16-bit word, scaled into [-1, 1)."""
    words = np.asarray(words, dtype=np.int64)
    signed = np.where(words >= 1 << 15, words - (1 << 16), words)
    return signed / float(1 << 15)


def prbs_weights(seed: int, L: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """(W, b) from L*d + L consecutive LFSR words, W filled row by row."""
    if L < 1 or d < 1:
        raise ElmError(f"L and d must be positive, got L={L}, d={d}")
    values = words_to_weights(Lfsr(seed).words(L * d + L))
    return values[:L * d].reshape(L, d), values[L * d:]


# ---------------------------------------------------------------- model

@dataclass(eq=False)
class ElmModel:
    L: int
    d: int = 5
    mode: str = BOUNDARY
    seed: int = 1
    beta: np.ndarray | None = None
    target: float = 1.0
    W: np.ndarray = field(init=False, repr=False)
    b: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ElmError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == BOUNDARY and self.target == 0:
            raise ElmError("boundary target must be nonzero")
        self.W, self.b = prbs_weights(self.seed, self.L, self.d)
        if self.beta is not None:
            self.beta = np.asarray(self.beta, dtype=float).reshape(self.out_dim, self.L)
        self._quantized = {}

    @property
    def out_dim(self) -> int:
        return 1 if self.mode == BOUNDARY else self.d

    def targets_for(self, X: np.ndarray) -> np.ndarray:
        """Training targets (N x out_dim) for inputs X (N x d)."""
        X = np.atleast_2d(X)
        if self.mode == BOUNDARY:
            return np.full((X.shape[0], 1), float(self.target))
        return X.copy()

    def quantized(self, fmt: fxp.FixedFormat):
        """Raw fixed-point copies of (W, b, beta), cached per format."""
        key = (fmt, None if self.beta is None else self.beta.tobytes())
        if key not in self._quantized:
            self._quantized.clear()
            beta = None if self.beta is None else fxp.quantize_array(self.beta, fmt)
            self._quantized[key] = (fxp.quantize_array(self.W, fmt),
                                    fxp.quantize_array(self.b, fmt), beta)
        return self._quantized[key]

    def to_dict(self) -> dict:
        if self.beta is None:
            raise ElmError("cannot serialize an untrained model")
        return {"seed": int(self.seed), "L": self.L, "d": self.d, "mode": self.mode,
                "target": float(self.target),
                "beta": [[float(v) for v in row] for row in self.beta]}

    @classmethod
    def from_dict(cls, data: dict) -> "ElmModel":
        return cls(L=int(data["L"]), d=int(data["d"]), mode=data["mode"], seed=int(data["seed"]),
                   beta=np.array(data["beta"], dtype=float),
                   target=float(data.get("target", 1.0)))


def _as_values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float)


def hidden_forward(x, model: ElmModel, fmt: fxp.FixedFormat | None = None) -> np.ndarray:
    """ReLU(W x + b).  With *fmt*, every product goes through a saturating MAC."""
    x = _as_values(x)
    if x.shape != (model.d,):
        raise ElmError(f"input has shape {x.shape}, model expects ({model.d},)")
    if fmt is None:
        return np.maximum(model.W @ x + model.b, 0.0)
    W_raw, b_raw, _ = model.quantized(fmt)
    acc = fxp.dot_array(W_raw, fxp.quantize_array(x, fmt), b_raw, fmt)
    return fxp.dequantize_array(fxp.relu_array(acc), fmt)


def hidden_batch(X: np.ndarray, model: ElmModel) -> np.ndarray:
    """Floating-point hidden layer for a batch, N x L."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.maximum(X @ model.W.T + model.b, 0.0)


def output_forward(h: np.ndarray, model: ElmModel, fmt: fxp.FixedFormat | None = None) -> np.ndarray:
    if model.beta is None:
        raise ElmError("output weights are not initialized, bootstrap the model first")
    h = np.asarray(h, dtype=float)
    if fmt is None:
        return model.beta @ h
    _, _, beta_raw = model.quantized(fmt)
    zero = np.zeros(model.out_dim, dtype=np.int64)
    acc = fxp.dot_array(beta_raw, fxp.quantize_array(h, fmt), zero, fmt)
    return fxp.dequantize_array(acc, fmt)


def occ_error(x, model: ElmModel, output: np.ndarray) -> float:
    output = np.asarray(output, dtype=float)
    if model.mode == BOUNDARY:
        return float(abs(output[0] - model.target))
    return float(np.sqrt(np.mean((output - _as_values(x)) ** 2)))


def score(x, model: ElmModel, fmt: fxp.FixedFormat | None = None) -> float:
    """Anomaly score of one normalized input."""
    return occ_error(x, model, output_forward(hidden_forward(x, model, fmt), model, fmt))


def score_batch(X: np.ndarray, model: ElmModel, fmt: fxp.FixedFormat | None = None) -> np.ndarray:
    """Anomaly scores for a batch of inputs (N x d).

    The fixed-point path runs the same MAC sequence as `score`, broadcast
    over the batch, and gives bit-identical results.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if fmt is None:
        Y = hidden_batch(X, model) @ model.beta.T
    else:
        if model.beta is None:
            raise ElmError("output weights are not initialized, bootstrap the model first")
        W_raw, b_raw, beta_raw = model.quantized(fmt)
        X_raw = fxp.quantize_array(X, fmt)
        acc = np.broadcast_to(b_raw, (X.shape[0], model.L))
        for i in range(model.d):
            acc = fxp.mac_array(acc, W_raw[None, :, i], X_raw[:, i, None], fmt)
        H_raw = fxp.relu_array(acc)
        acc = np.zeros((X.shape[0], model.out_dim), dtype=np.int64)
        for j in range(model.L):
            acc = fxp.mac_array(acc, beta_raw[None, :, j], H_raw[:, j, None], fmt)
        Y = fxp.dequantize_array(acc, fmt)
    if model.mode == BOUNDARY:
        return np.abs(Y[:, 0] - model.target)
    return np.sqrt(np.mean((Y - X) ** 2, axis=1))


# ---------------------------------------------------------------- batch oracle

@dataclass
class BatchDesign:
    H: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        T = np.asarray(self.T, dtype=float)
        self.T = T.reshape(-1, 1) if T.ndim == 1 else T
        if self.H.shape[0] != self.T.shape[0]:
            raise ElmError(f"H has {self.H.shape[0]} rows but T has {self.T.shape[0]}")


def batch_solve(design: BatchDesign, ridge: float = 0.0) -> np.ndarray:
    """Regularized least squares output weights, out_dim x L.

    Solves (H^T H + ridge I) beta^T = H^T T; with ridge = 0 and full column
    rank this is the Moore-Penrose solution H^+ T.
    """
    if ridge < 0:
        raise ElmError("ridge must be >= 0")
    H, T = design.H, design.T
    if H.shape[0] < 1:
        raise ElmError("need at least one sample")
    G = H.T @ H + ridge * np.eye(H.shape[1])
    if ridge == 0 and np.linalg.matrix_rank(G) < G.shape[0]:
        raise ElmError("normal matrix is singular, use ridge > 0 or more samples")
    try:
        return np.linalg.solve(G, H.T @ T).T
    except np.linalg.LinAlgError as exc:
        raise ElmError(f"normal matrix is singular: {exc}") from exc


# ---------------------------------------------------------------- OPIUM

@dataclass(eq=False)
class OpiumState:
    theta: np.ndarray
    c: float
    n0: int
    beta0: np.ndarray
    samples_seen: int = 0
    history: deque = field(default_factory=lambda: deque(maxlen=1000))

    @property
    def theta0(self) -> np.ndarray:
        """Prior the recursion starts from before the bootstrap block."""
        return self.c * np.eye(self.theta.shape[0])


def opium_init(X_boot, model: ElmModel, c: float = 100.0) -> OpiumState:
    """Bootstrap beta from N0 >= L samples and set up the recursion.

    The recursion starts from theta0 = c I.  Absorbing the bootstrap block
    into it leaves beta at the ridge solution with penalty 1/c and theta at
    (H0^T H0 + I/c)^-1, which is what per-sample updates from (0, c I) over
    the same block would produce.  Later updates therefore keep beta equal
    to the ridge solution over every sample seen so far.
    """
    if not c > 0:
        raise ElmError(f"c must be positive, got {c}")
    X_boot = np.atleast_2d(np.asarray([_as_values(x) for x in X_boot], dtype=float))
    n0 = X_boot.shape[0]
    if n0 < model.L:
        raise ElmError(f"bootstrap needs N0 >= L = {model.L} samples, got {n0}")
    H0 = hidden_batch(X_boot, model)
    lam = 1.0 / c
    beta0 = batch_solve(BatchDesign(H0, model.targets_for(X_boot)), lam)
    theta = np.linalg.inv(H0.T @ H0 + lam * np.eye(model.L))
    theta = 0.5 * (theta + theta.T)
    model.beta = beta0.copy()
    return OpiumState(theta=theta, c=float(c), n0=n0, beta0=beta0.copy(), samples_seen=n0)


def opium_update(state: OpiumState, model: ElmModel, h: np.ndarray, target) -> tuple[OpiumState, np.ndarray]:
    """One rank-1 update of (beta, theta) from hidden vector h and its target."""
    h = np.asarray(h, dtype=float)
    if h.shape != (model.L,):
        raise ElmError(f"hidden vector has shape {h.shape}, expected ({model.L},)")
    target = np.atleast_1d(np.asarray(target, dtype=float))
    t = state.theta @ h
    denom = 1.0 + h @ t
    if not (np.isfinite(denom) and denom > 0):
        raise DivergenceError(f"OPIUM denominator {denom} is not positive")
    eta = t / denom
    err = target - model.beta @ h
    delta = np.outer(err, eta)
    beta = model.beta + delta
    theta = state.theta - np.outer(t, t) / denom
    if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(theta))):
        raise DivergenceError("non-finite value in OPIUM update")
    norm = np.linalg.norm(beta)
    state.history.append(np.linalg.norm(delta) / norm if norm > 0 else 0.0)
    state.theta = theta
    state.samples_seen += 1
    model.beta = beta
    return state, beta


def train_sample(state: OpiumState, model: ElmModel, x) -> OpiumState:
    x = _as_values(x)
    opium_update(state, model, hidden_forward(x, model), model.targets_for(x)[0])
    return state


def converged(state: OpiumState, window: int = 50, tol: float = 1e-3) -> bool:
    """Mean relative output-weight change over the last *window* updates < *tol*."""
    if len(state.history) < window:
        return False
    recent = list(state.history)[-window:]
    return float(np.mean(recent)) < tol


# ---------------------------------------------------------------- files

def save_model(model: ElmModel, path: str | Path, c: float | None = None) -> None:
    """Write the model as versioned JSON.  W and b are not stored."""
    record = {"format": MODEL_FORMAT, "version": MODEL_VERSION, **model.to_dict()}
    if c is not None:
        record["c"] = float(c)
    Path(path).write_text(json.dumps(record, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ElmModel:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("format") != MODEL_FORMAT or record.get("version") != MODEL_VERSION:
        raise ElmError(f"{path}: not an {MODEL_FORMAT} v{MODEL_VERSION} file")
    return ElmModel.from_dict(record)
