"""Energy per inference as the active ensemble shrinks.

The model is affine in the number of active neurons, so halving the
neurons does not halve the energy: the fixed cost stays.
"""

from adepos import energy
from adepos.sweep import Grid, sweep_energy

model = energy.calibrate()
print(f"alpha = {model.alpha:.4f} nJ/neuron, gamma = {model.gamma:.2f} nJ")
print(f"reconstruction multiplier = {model.mode_factor('reconstruction'):.3f}\n")

for l_eff in (180, 140, 100, 60, 20.42, 20):
    nj = energy.estimate(model, l_eff)
    print(f"L_eff {l_eff:>6}: {nj:7.2f} nJ  ({energy.estimate(model, 180) / nj:4.2f}x below 180)")

print("\nL  n_bl  bits  nJ      relative")
for c in sweep_energy(model, Grid(L=(20,), n_bl=(9,), bits=(8, 12, 16))):
    print(f"{c.L:<3}{c.n_bl:>4}{c.bits:>6}  {c.nj_per_inference:7.2f} {c.relative:7.3f}")
