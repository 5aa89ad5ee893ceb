"""Adaptive-ensemble ELM anomaly detection for machine-health monitoring.

Modules, in pipeline order: `ingest` (snapshot files and synthetic traces),
`features`, `fixedpoint`, `elm`, `ensemble`, `controller` (adaptive learner
count), `calibration` (thresholds and leave-one-out evaluation), `energy`
and `cli`.
"""

from .calibration import loo_evaluate, threshold
from .config import RunConfig, load_config
from .controller import run
from .elm import ElmModel
from .energy import calibrate, estimate, trace_energy
from .ensemble import Ensemble, TrainConfig, train_ensemble
from .features import extract, fit_normalizer
from .fixedpoint import FixedFormat, quantize, dequantize, mac

__version__ = "0.1.0"
