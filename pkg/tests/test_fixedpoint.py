import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from adepos import fixedpoint as fxp
from adepos.fixedpoint import FixedFormat, FixedPointError, FixedValue

formats = st.builds(lambda b, f: FixedFormat(b, min(f, b - 1)),
                    st.integers(8, 16), st.integers(0, 15))
reals = st.floats(-20, 20, allow_nan=False)


def raw_values(fmt):
    return st.integers(fmt.raw_min, fmt.raw_max)


def test_default_split():
    assert FixedFormat(16).frac_bits == 12
    assert FixedFormat(8).frac_bits == 4


@pytest.mark.parametrize("bits,frac", [(7, 3), (17, 4), (8, 8), (8, -1)])
def test_format_bounds(bits, frac):
    with pytest.raises(FixedPointError):
        FixedFormat(bits, frac)


def test_range_b8_f4():
    f = FixedFormat(8, 4)
    assert (f.raw_min, f.raw_max) == (-128, 127)
    assert (f.min_value, f.max_value) == (-8.0, 7.9375)


def test_quantize_examples():
    f = FixedFormat(8, 4)
    assert fxp.quantize(0.0, f).raw == 0
    assert fxp.quantize(7.99, f).raw == 127 and fxp.quantize(7.99, f).value == 7.9375
    assert fxp.quantize(0.06, f).raw == 1 and fxp.quantize(0.06, f).value == 0.0625


def test_quantize_ties_away_from_zero():
    f = FixedFormat(8, 4)
    assert fxp.quantize(1 / 32, f).raw == 1
    assert fxp.quantize(-1 / 32, f).raw == -1
    assert fxp.quantize(3 / 32, f).raw == 2
    assert fxp.quantize(-3 / 32, f).raw == -2


def test_quantize_nan_and_inf():
    f = FixedFormat(12)
    with pytest.raises(FixedPointError):
        fxp.quantize(float("nan"), f)
    with pytest.raises(FixedPointError):
        fxp.quantize_array([0.0, np.nan], f)
    assert fxp.quantize(float("inf"), f).raw == f.raw_max
    assert fxp.quantize(-1e300, f).raw == f.raw_min


def test_mac_examples():
    f = FixedFormat(8, 4)
    q = lambda v: fxp.quantize(v, f)
    assert fxp.mac(q(0), q(0), q(3.5)).raw == 0
    assert fxp.mac(q(0), q(1.0), q(1.0)).raw == 16
    top = FixedValue(f.raw_max, f)
    assert fxp.mac(top, q(1.0), q(0.5)).raw == f.raw_max
    assert fxp.mac(FixedValue(f.raw_min, f), q(-1.0), q(0.5)).raw == f.raw_min


def test_mac_format_mismatch():
    a, b = FixedFormat(8, 4), FixedFormat(12)
    with pytest.raises(FixedPointError, match="mismatch"):
        fxp.mac(FixedValue(0, a), FixedValue(1, a), FixedValue(1, b))


def test_relu_examples():
    f = FixedFormat(8, 4)
    assert [fxp.relu_fixed(FixedValue(r, f)).raw for r in (-5, 0, 7)] == [0, 0, 7]


@settings(max_examples=200, deadline=None)
@given(formats, reals)
def test_quantize_matches_exact_oracle(fmt, x):
    assert fxp.quantize(x, fmt).raw == oracles.quantize(x, fmt.total_bits, fmt.frac_bits)


@settings(max_examples=200, deadline=None)
@given(formats, st.data())
def test_mac_matches_exact_oracle(fmt, data):
    acc, a, b = (data.draw(raw_values(fmt)) for _ in range(3))
    got = fxp.mac(FixedValue(acc, fmt), FixedValue(a, fmt), FixedValue(b, fmt)).raw
    assert got == oracles.mac(acc, a, b, fmt.total_bits, fmt.frac_bits)
    assert fmt.raw_min <= got <= fmt.raw_max


@settings(max_examples=100, deadline=None)
@given(formats, st.data())
def test_dequantize_quantize_idempotent(fmt, data):
    raw = data.draw(raw_values(fmt))
    assert fxp.quantize(fxp.dequantize(FixedValue(raw, fmt)), fmt).raw == raw


@settings(max_examples=200, deadline=None)
@given(formats, st.data())
def test_rounding_error_half_lsb(fmt, data):
    x = data.draw(st.floats(fmt.min_value, fmt.max_value))
    assert abs(fxp.dequantize(fxp.quantize(x, fmt)) - x) <= 2.0 ** (-fmt.frac_bits - 1)


@settings(max_examples=50, deadline=None)
@given(formats, st.data())
def test_array_path_bit_exact(fmt, data):
    xs = data.draw(st.lists(reals, min_size=1, max_size=20))
    raw = fxp.quantize_array(xs, fmt)
    assert raw.tolist() == [fxp.quantize(x, fmt).raw for x in xs]
    acc = data.draw(st.lists(raw_values(fmt), min_size=len(xs), max_size=len(xs)))
    b = data.draw(raw_values(fmt))
    got = fxp.mac_array(np.array(acc), raw, np.int64(b), fmt)
    want = [fxp.mac(FixedValue(c, fmt), FixedValue(int(r), fmt), FixedValue(b, fmt)).raw
            for c, r in zip(acc, raw)]
    assert got.tolist() == want


def test_dot_array_is_sequential_macs(rng):
    fmt = FixedFormat(10)
    W = fxp.quantize_array(rng.uniform(-1, 1, size=(4, 6)), fmt)
    x = fxp.quantize_array(rng.uniform(-6, 6, size=6), fmt)
    bias = fxp.quantize_array(rng.uniform(-1, 1, size=4), fmt)
    got = fxp.dot_array(W, x, bias, fmt)
    for j in range(4):
        acc = FixedValue(int(bias[j]), fmt)
        for i in range(6):
            acc = fxp.mac(acc, FixedValue(int(W[j, i]), fmt), FixedValue(int(x[i]), fmt))
        assert got[j] == acc.raw


def test_error_shrinks_with_bits(rng):
    """Mean |error| of a dot product falls as bits grow (F = B - 4)."""
    W = rng.uniform(-1, 1, size=(200, 5))
    x = rng.normal(size=(200, 5))
    exact = np.einsum("ij,ij->i", W, x)
    errs = []
    for bits in range(8, 17):
        fmt = FixedFormat(bits)
        Wq, xq = fxp.quantize_array(W, fmt), fxp.quantize_array(x, fmt)
        acc = np.zeros(200, dtype=np.int64)
        for i in range(5):
            acc = fxp.mac_array(acc, Wq[:, i], xq[:, i], fmt)
        errs.append(np.mean(np.abs(fxp.dequantize_array(acc, fmt) - exact)))
    assert all(a >= b for a, b in zip(errs, errs[1:]))


def test_fixed_value_range_check():
    with pytest.raises(FixedPointError):
        FixedValue(128, FixedFormat(8, 4))
