import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from adepos import elm
from adepos.elm import (BOUNDARY, RECONSTRUCTION, BatchDesign, ElmError, ElmModel, Lfsr,
                        OpiumState)
from adepos.fixedpoint import FixedFormat


def trained_model(rng, L=10, d=5, mode=BOUNDARY, seed=77, n=200, c=100.0):
    m = ElmModel(L, d, mode, seed)
    X = rng.normal(size=(n, d))
    state = elm.opium_init(X[:L], m, c)
    for x in X[L:]:
        elm.train_sample(state, m, x)
    return m, state, X


# ---------------------------------------------------------------- PRBS

def test_lfsr_maximal_period():
    reg = Lfsr(0xACE1)
    start = reg.state
    seen = set()
    for _ in range(65535):
        seen.add(reg.step())
        assert reg.state != 0
    assert reg.state == start
    assert len(seen) == 65535


@pytest.mark.parametrize("seed", [1, 0xACE1, 0xFFFF, 0x8000, 12345])
def test_lfsr_matches_stage_model(seed):
    assert Lfsr(seed).words(40).tolist() == oracles.lfsr_words(seed, 40)


def test_weights_mapping():
    words = np.array([0, 1, 0x7FFF, 0x8000, 0xFFFF])
    got = elm.words_to_weights(words)
    assert got.tolist() == [float(oracles.word_to_weight(int(w))) for w in words]
    assert got.min() >= -1 and got.max() < 1


def test_prbs_layout_and_determinism():
    W, b = elm.prbs_weights(321, 4, 3)
    words = oracles.lfsr_words(321, 4 * 3 + 4)
    w = [float(oracles.word_to_weight(v)) for v in words]
    assert W.tolist() == np.reshape(w[:12], (4, 3)).tolist()
    assert b.tolist() == w[12:]
    W2, b2 = elm.prbs_weights(321, 4, 3)
    assert np.array_equal(W, W2) and np.array_equal(b, b2)


def test_prbs_distinct_seeds_differ():
    assert not np.array_equal(elm.prbs_weights(100, 20, 5)[0], elm.prbs_weights(101, 20, 5)[0])


def test_prbs_weights_centered():
    w = elm.words_to_weights(Lfsr(0xBEEF).words(100_000))
    assert abs(w.mean()) < 0.02


def test_zero_seed_rejected():
    with pytest.raises(ElmError):
        Lfsr(0)
    with pytest.raises(ElmError):
        elm.prbs_weights(0x10000, 2, 2)


# ---------------------------------------------------------------- forward pass

def test_model_shapes():
    assert ElmModel(7, 5, BOUNDARY).out_dim == 1
    assert ElmModel(7, 5, RECONSTRUCTION).out_dim == 5
    m = ElmModel(7, 5, seed=3)
    assert m.W.shape == (7, 5) and m.b.shape == (7,)


def test_hidden_zero_case():
    m = ElmModel(3, 2)
    m.b = np.zeros(3)
    assert np.all(elm.hidden_forward(np.zeros(2), m) == 0)


def test_hidden_hand_example():
    m = ElmModel(1, 2)
    m.W, m.b = np.array([[1.0, -1.0]]), np.array([0.5])
    assert elm.hidden_forward(np.array([2.0, 1.0]), m).tolist() == [1.5]


def test_hidden_relu_floor():
    m = ElmModel(4, 2)
    m.W, m.b = -np.abs(m.W), -np.abs(m.b)
    assert np.all(elm.hidden_forward(np.array([3.0, 1.0]), m) == 0)


def test_hidden_dimension_mismatch():
    with pytest.raises(ElmError, match="shape"):
        elm.hidden_forward(np.zeros(4), ElmModel(3, 5))


def test_output_examples():
    m = ElmModel(2, 5, beta=np.array([[0.5, 0.5]]))
    assert elm.output_forward(np.zeros(2), m).tolist() == [0.0]
    assert elm.output_forward(np.array([1.0, 3.0]), m).tolist() == [2.0]
    ident = ElmModel(5, 5, RECONSTRUCTION, beta=np.eye(5))
    h = np.arange(5.0)
    assert elm.output_forward(h, ident).tolist() == h.tolist()


def test_output_needs_beta():
    with pytest.raises(ElmError, match="not initialized"):
        elm.output_forward(np.zeros(3), ElmModel(3))


def test_occ_error_examples():
    m = ElmModel(2)
    assert elm.occ_error(None, m, [1.0]) == 0.0
    assert elm.occ_error(None, m, [0.7]) == pytest.approx(0.3)
    r = ElmModel(2, 3, RECONSTRUCTION)
    x = np.array([1.0, -2.0, 0.5])
    assert elm.occ_error(x, r, x) == 0.0
    assert elm.occ_error(x, r, x + [3.0, 0, 0]) == pytest.approx(np.sqrt(3.0))


def test_fixed_score_matches_exact_oracle(rng):
    m, _, X = trained_model(rng)
    for bits in (8, 12, 16):
        fmt = FixedFormat(bits)
        for x in X[:15] * 2:
            want = oracles.fixed_score_boundary(x, m.W, m.b, m.beta[0], bits, fmt.frac_bits)
            assert elm.score(x, m, fmt) == want


@pytest.mark.parametrize("mode", [BOUNDARY, RECONSTRUCTION])
@pytest.mark.parametrize("bits", [None, 8, 12, 16])
def test_score_batch_matches_scalar(rng, mode, bits):
    m, _, X = trained_model(rng, mode=mode)
    fmt = None if bits is None else FixedFormat(bits)
    Xs = np.vstack([X[:30], 6 * X[:10]])      # include saturating inputs
    batch = elm.score_batch(Xs, m, fmt)
    single = np.array([elm.score(x, m, fmt) for x in Xs])
    if fmt is None:
        np.testing.assert_allclose(batch, single, rtol=1e-12, atol=1e-12)
    else:
        assert batch.tolist() == single.tolist()


# ---------------------------------------------------------------- batch solve

def test_batch_identity_design(rng):
    T = rng.normal(size=(6, 2))
    np.testing.assert_allclose(elm.batch_solve(BatchDesign(np.eye(6), T)), T.T, atol=1e-14)


def test_batch_zero_target(rng):
    H = rng.normal(size=(10, 4))
    for lam in (0.0, 0.1, 10.0):
        assert np.all(elm.batch_solve(BatchDesign(H, np.zeros(10)), lam) == 0)


def test_batch_normal_equations(rng):
    H, T = rng.normal(size=(20, 5)), rng.normal(size=(20, 1))
    beta = elm.batch_solve(BatchDesign(H, T))
    assert np.linalg.norm(H.T @ T - H.T @ H @ beta.T) < 1e-9


def test_batch_singular_without_ridge():
    H = np.ones((5, 3))
    with pytest.raises(ElmError, match="singular"):
        elm.batch_solve(BatchDesign(H, np.ones(5)))
    elm.batch_solve(BatchDesign(H, np.ones(5)), 0.1)


def test_batch_row_mismatch():
    with pytest.raises(ElmError):
        BatchDesign(np.ones((3, 2)), np.ones(4))


# ---------------------------------------------------------------- OPIUM

def test_init_matches_ridge_oracle(rng):
    m = ElmModel(10, 5, seed=999)
    X = rng.normal(size=(10, 5))
    state = elm.opium_init(X, m, c=100.0)
    H = np.maximum(X @ m.W.T + m.b, 0)
    np.testing.assert_allclose(state.beta0, oracles.ridge(H, np.ones(10), 0.01), rtol=1e-9,
                               atol=1e-12)
    np.testing.assert_array_equal(state.theta0, 100.0 * np.eye(10))


def test_init_identity_limit():
    beta = elm.batch_solve(BatchDesign(np.eye(4), np.ones(4)), 0.0)
    assert beta.tolist() == [[1.0] * 4]


def test_init_needs_enough_samples(rng):
    with pytest.raises(ElmError, match="N0 >= L"):
        elm.opium_init(rng.normal(size=(9, 5)), ElmModel(10), 100.0)
    with pytest.raises(ElmError, match="positive"):
        elm.opium_init(rng.normal(size=(10, 5)), ElmModel(10), 0.0)


def test_update_scalar_hand_case():
    m = ElmModel(1, 1, beta=np.zeros((1, 1)))
    state = OpiumState(np.ones((1, 1)), 1.0, 1, np.zeros((1, 1)))
    state, beta = elm.opium_update(state, m, np.array([1.0]), 1.0)
    assert beta.tolist() == [[0.5]]
    assert state.theta.tolist() == [[0.5]]


def test_update_zero_hidden(rng):
    m, state, _ = trained_model(rng)
    beta, theta = m.beta.copy(), state.theta.copy()
    elm.opium_update(state, m, np.zeros(m.L), 1.0)
    assert np.array_equal(m.beta, beta) and np.array_equal(state.theta, theta)


@pytest.mark.parametrize("mode", [BOUNDARY, RECONSTRUCTION])
def test_rls_equals_ridge(rng, mode):
    m, _, X = trained_model(rng, mode=mode, n=500)
    H = np.maximum(X @ m.W.T + m.b, 0)
    T = np.ones(len(X)) if mode == BOUNDARY else X
    ref = oracles.ridge(H, T, 0.01)
    assert np.linalg.norm(m.beta - ref) / np.linalg.norm(ref) < 1e-6


def test_theta_stays_symmetric_pd(rng):
    m = ElmModel(12, 5, seed=4242)
    X = rng.normal(size=(300, 5))
    state = elm.opium_init(X[:12], m, 100.0)
    for x in X[12:]:
        elm.train_sample(state, m, x)
        assert np.max(np.abs(state.theta - state.theta.T)) < 1e-9
    for h in rng.normal(size=(20, 12)):
        assert h @ state.theta @ h > 0


def test_divergence_reported():
    m = ElmModel(1, 1, beta=np.zeros((1, 1)))
    state = OpiumState(-np.ones((1, 1)), 1.0, 1, np.zeros((1, 1)))
    with pytest.raises(elm.DivergenceError):
        elm.opium_update(state, m, np.array([1.0]), 1.0)


def test_converged_gates():
    state = OpiumState(np.eye(2), 1.0, 2, np.zeros((1, 2)))
    state.history.extend([0.0] * 49)
    assert not elm.converged(state, window=50)
    state.history.append(0.0)
    assert elm.converged(state, window=50)
    state.history.extend([1.0] * 50)
    assert not elm.converged(state, window=50)


def test_constant_stream_converges_fast():
    L = 25
    m = ElmModel(L, 5, seed=31337)
    x = np.array([0.3, -0.2, 0.5, 0.1, -0.4])
    state = elm.opium_init([x] * L, m, 100.0)
    steps = 0
    while not elm.converged(state, window=50, tol=1e-3):
        elm.train_sample(state, m, x)
        steps += 1
        assert steps <= 2 * L
    assert steps <= 2 * L


# ---------------------------------------------------------------- persistence

def test_model_file_round_trip(tmp_path, rng):
    m, _, X = trained_model(rng)
    path = tmp_path / "m.json"
    elm.save_model(m, path, c=100.0)
    record = json.loads(path.read_text())
    assert "W" not in record and "b" not in record
    assert record["c"] == 100.0 and record["format"] == elm.MODEL_FORMAT
    back = elm.load_model(path)
    assert np.array_equal(back.W, m.W) and np.array_equal(back.beta, m.beta)
    assert elm.score(X[0], back) == elm.score(X[0], m)


def test_model_file_format_checked(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ElmError):
        elm.load_model(path)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 0xFFFF), st.integers(1, 30), st.integers(1, 6))
def test_weights_reproducible(seed, L, d):
    a, b = ElmModel(L, d, seed=seed), ElmModel(L, d, seed=seed)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)
