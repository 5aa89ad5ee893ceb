"""Bit-exact two's complement fixed-point arithmetic with saturation.

Scalar values (`FixedValue`) use Python ints; the ``*_array`` helpers apply
the same rules elementwise to int64 numpy arrays of raw words and are what
the quantized inference path runs on.  Both paths agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_BITS = 8
MAX_BITS = 16


class FixedPointError(ValueError):
    pass


@dataclass(frozen=True)
class FixedFormat:
    """Signed format with ``total_bits`` bits, ``frac_bits`` of them fractional."""

    total_bits: int = 16
    frac_bits: int | None = None  # default: sign + 3 integer bits

    def __post_init__(self):
        if not MIN_BITS <= self.total_bits <= MAX_BITS:
            raise FixedPointError(
                f"total bits must be in [{MIN_BITS}, {MAX_BITS}], got {self.total_bits}")
        if self.frac_bits is None:
            object.__setattr__(self, "frac_bits", self.total_bits - 4)
        if not 0 <= self.frac_bits <= self.total_bits - 1:
            raise FixedPointError(
                f"fraction bits must be in [0, {self.total_bits - 1}], got {self.frac_bits}")

    @property
    def raw_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def lsb(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def min_value(self) -> float:
        return self.raw_min * self.lsb

    @property
    def max_value(self) -> float:
        return self.raw_max * self.lsb

    def saturate(self, raw: int) -> int:
        return min(max(raw, self.raw_min), self.raw_max)


@dataclass(frozen=True)
class FixedValue:
    raw: int
    fmt: FixedFormat

    def __post_init__(self):
        if not self.fmt.raw_min <= self.raw <= self.fmt.raw_max:
            raise FixedPointError(f"raw {self.raw} outside {self.fmt}")

    @property
    def value(self) -> float:
        return self.raw * self.fmt.lsb

    def __float__(self):
        return self.value


def _round_half_away(x: float) -> int:
    whole = math.floor(abs(x))
    r = whole + (abs(x) - whole >= 0.5)  # the subtraction is exact
    return -r if x < 0 else r


def _shift_round(p: int, shift: int) -> int:
    """p / 2**shift rounded to nearest, ties away from zero."""
    if shift == 0:
        return p
    half = 1 << (shift - 1)
    q = (abs(p) + half) >> shift
    return -q if p < 0 else q


def quantize(x: float, fmt: FixedFormat) -> FixedValue:
    x = float(x)
    if math.isnan(x):
        raise FixedPointError("cannot quantize NaN")
    x = min(max(x, -2.0 ** 40), 2.0 ** 40)  # far outside any format, saturates below
    return FixedValue(fmt.saturate(_round_half_away(math.ldexp(x, fmt.frac_bits))), fmt)


def dequantize(v: FixedValue) -> float:
    return v.value


def mac(acc: FixedValue, a: FixedValue, b: FixedValue) -> FixedValue:
    """acc + a*b: full-width product, rounded back to the format, saturated."""
    if not acc.fmt == a.fmt == b.fmt:
        raise FixedPointError(f"format mismatch: {acc.fmt}, {a.fmt}, {b.fmt}")
    fmt = acc.fmt
    product = _shift_round(a.raw * b.raw, fmt.frac_bits)
    return FixedValue(fmt.saturate(acc.raw + product), fmt)


def relu_fixed(x: FixedValue) -> FixedValue:
    return x if x.raw > 0 else FixedValue(0, x.fmt)


# ---------------------------------------------------------------- arrays

def quantize_array(x, fmt: FixedFormat) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise FixedPointError("cannot quantize NaN")
    scaled = np.ldexp(np.clip(x, -2.0 ** 40, 2.0 ** 40), fmt.frac_bits)
    mag = np.abs(scaled)
    whole = np.floor(mag)
    raw = np.sign(scaled) * (whole + (mag - whole >= 0.5))
    return np.clip(raw, fmt.raw_min, fmt.raw_max).astype(np.int64)


def dequantize_array(raw, fmt: FixedFormat) -> np.ndarray:
    return np.ldexp(np.asarray(raw, dtype=np.int64).astype(float), -fmt.frac_bits)


def _shift_round_array(p: np.ndarray, shift: int) -> np.ndarray:
    if shift == 0:
        return p
    q = (np.abs(p) + (1 << (shift - 1))) >> shift
    return np.where(p < 0, -q, q)


def mac_array(acc: np.ndarray, a: np.ndarray, b: np.ndarray, fmt: FixedFormat) -> np.ndarray:
    product = _shift_round_array(np.asarray(a, np.int64) * np.asarray(b, np.int64),
                                 fmt.frac_bits)
    return np.clip(np.asarray(acc, np.int64) + product, fmt.raw_min, fmt.raw_max)


def dot_array(weights: np.ndarray, x: np.ndarray, bias: np.ndarray, fmt: FixedFormat) -> np.ndarray:
    """Row-wise ``bias + weights @ x`` as a sequence of saturating MACs.

    The accumulator starts at the bias and takes one product per input in
    index order, as a time-multiplexed neuron would.
    """
    weights = np.asarray(weights, np.int64)
    acc = np.asarray(bias, np.int64).copy()
    for i in range(weights.shape[1]):
        acc = mac_array(acc, weights[:, i], np.int64(x[i]), fmt)
    return acc


def relu_array(raw: np.ndarray) -> np.ndarray:
    return np.maximum(raw, 0)
