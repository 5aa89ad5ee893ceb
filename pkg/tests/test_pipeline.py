import numpy as np
import pytest

from adepos import controller, pipeline, sweep
from adepos.calibration import fold_thresholds
from adepos.ensemble import Ensemble
from adepos.pipeline import ScoredEnsemble, monitor_bearing, restore_bearing, train_bearing


@pytest.fixture(scope="module")
def trained(small_bearings, small_config):
    return [train_bearing(b, small_config) for b in small_bearings]


def test_training_stops_at_convergence(trained):
    for t in trained:
        assert t.train_end == max(t.ensemble.converged_at)
        assert t.errors.shape == (len(t.data), 9)


def test_scored_view_matches_live_ensemble(trained, small_config):
    folds = fold_thresholds(trained, small_config.k)
    fmt = small_config.fixed_format()
    for t in trained[-2:]:      # the degrading bearings: both verdicts occur
        thr = folds[t.data.bearing_id].thr
        live = Ensemble(t.ensemble.learners, t.ensemble.base_seed, threshold=thr)
        ref = controller.run(live, t.monitor_X, small_config.n_max, small_config.n_min, fmt,
                             start=t.train_end)
        got = monitor_bearing(t, thr, small_config)
        assert got.records == ref.records
        assert got.fault_declared


def test_restore_rebuilds_scores(trained, small_config):
    t = trained[0]
    back = restore_bearing(t.data, t.ensemble, small_config)
    assert np.array_equal(back.errors, t.errors)
    assert back.train_end == t.train_end
    with pytest.raises(ValueError, match="normalizer"):
        restore_bearing(t.data, Ensemble(t.ensemble.learners, 0), small_config)


def test_float_and_fixed_scores_close(trained, small_config):
    t = trained[0]
    flt = restore_bearing(t.data, t.ensemble, small_config.with_overrides(bits=None))
    healthy = slice(t.train_end, None)
    assert np.median(np.abs(flt.errors[healthy] - t.errors[healthy])) < 1e-2


def test_synthetic_layout():
    specs = pipeline.synthetic_specs(3)
    labels = [label for _, label in specs]
    assert labels.count(0) == 8 and labels.count(1) == 4
    assert len({s.seed for s, _ in specs}) == 12


def test_write_synthetic_dataset_deterministic(tmp_path):
    layout = pipeline.SynthSet(n_healthy=2, n_degrading=1, n_windows=20, onset=10,
                               window_size=64)
    a = pipeline.write_synthetic_dataset(tmp_path / "a", 5, layout)
    b = pipeline.write_synthetic_dataset(tmp_path / "b", 5, layout)
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b and files_a
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert a.name == b.name


# ---------------------------------------------------------------- sweep

def test_static_fault_index():
    errs = np.array([[0.1, 0.9, 0.1], [0.9, 0.9, 0.1], [0.9, 0.9, 0.9]])
    assert sweep.static_fault_index(errs, 0.5) == 1
    assert sweep.static_fault_index(errs, 0.5, start=2) == 2
    assert sweep.static_fault_index(errs, 0.95) is None
    assert sweep.static_fault_index(errs, 0.9) is None     # strict


def test_static_matches_fixed_controller(trained, small_config):
    t = trained[-1]
    thr = float(np.median(t.errors[t.train_end:]))
    view = ScoredEnsemble(t.errors, thr, t.ensemble.L)
    log = controller.run(view, range(t.train_end, len(t.data)), n_max=9, n_min=9,
                         start=t.train_end)
    assert log.fault_index == sweep.static_fault_index(t.errors, thr, t.train_end)


@pytest.mark.parametrize("kw", [dict(L=()), dict(n_bl=(4,)), dict(L=(20, 30), n_bl=(9,)),
                                dict(bits=(7,))])
def test_grid_validation(kw):
    with pytest.raises(sweep.SweepError):
        sweep.Grid(**{**dict(L=(20,), n_bl=(9,), bits=(16,)), **kw})


def test_grid_cells():
    cells = list(sweep.Grid(L=(20,), n_bl=(3,), bits=(8, 16)).cells())
    assert cells == [(20, 1, 8), (20, 1, 16), (20, 3, 8), (20, 3, 16)]


def test_sweep_accuracy_small(small_bearings, small_config):
    grid = sweep.Grid(L=(20,), n_bl=(3,), bits=(16,))
    a = sweep.sweep_accuracy(small_bearings, small_config, grid)
    b = sweep.sweep_accuracy(small_bearings, small_config, grid)
    assert a == b and len(a) == 2
    assert all(0.0 <= c.mean_accuracy <= 1.0 and c.replicas == 1 for c in a)


def test_sweep_energy_relative():
    from adepos.energy import calibrate
    cells = sweep.sweep_energy(calibrate())
    top = max(cells, key=lambda c: (c.L * c.n_bl, c.bits))
    assert top.relative == pytest.approx(1.0)
    assert all(0 < c.relative <= 1.0 + 1e-12 for c in cells)
    one = sweep.sweep_energy(calibrate(), sweep.Grid(L=(20,), n_bl=(1,), bits=(16,)))
    assert len(one) == 1 and one[0].relative == pytest.approx(1.0)
