import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adepos.config import RunConfig
from adepos.pipeline import SynthSet, synthetic_data, write_synthetic_dataset

# short traces that converge quickly at the looser tolerance below; with
# seed 1 every bearing of this set is classified correctly
SMALL_SET = SynthSet(n_healthy=4, n_degrading=2, n_windows=900, onset=700,
                     amp_growth=0.01, impulse_growth=0.05, window_size=128)
SMALL_TOL = 1e-2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_config():
    return RunConfig(seed=1, tol=SMALL_TOL)


@pytest.fixture(scope="session")
def small_bearings():
    return synthetic_data(1, SMALL_SET)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Synthetic dataset on disk; returns the manifest path."""
    return write_synthetic_dataset(tmp_path_factory.mktemp("synth") / "data", 1, SMALL_SET)
