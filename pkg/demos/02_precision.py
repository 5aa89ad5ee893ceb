"""How narrow can the datapath get?

Trains one ensemble in floating point, then scores the same healthy trace
with 8 to 16 bit arithmetic and counts how often the fixed-point vote
disagrees with the float one.  Two thresholds are tried: the calibrated
one, and the median score, which puts many samples right at the edge.
"""

import numpy as np

from adepos import elm
from adepos.calibration import fold_thresholds
from adepos.config import RunConfig
from adepos.fixedpoint import FixedFormat
from adepos.pipeline import synthetic_data, train_bearing

cfg = RunConfig(seed=0, bits=None)
trained = [train_bearing(b, cfg) for b in synthetic_data(0)]
folds = fold_thresholds(trained, cfg.k)
t = trained[0]
flt = t.errors[t.train_end:]
thr = folds[t.data.bearing_id].thr
mid = float(np.median(flt))


def majority(scores, level):
    return (scores > level).sum(axis=1) > scores.shape[1] / 2


print(f"bearing {t.data.bearing_id}, {len(flt)} monitored samples")
print(f"{'bits':>4} {'mean |err|':>11} {'agree@thr':>10} {'agree@median':>13}")
for bits in range(8, 17):
    q = np.column_stack([elm.score_batch(t.monitor_X, m, FixedFormat(bits))
                         for m in t.ensemble.learners])
    drift = np.mean(np.abs(q - flt))
    a = np.mean(majority(q, thr) == majority(flt, thr))
    b = np.mean(majority(q, mid) == majority(flt, mid))
    print(f"{bits:>4} {drift:11.5f} {a:10.4%} {b:13.2%}")
