"""
Calibrated selection versus the high-confidence baselines
=========================================================

Run every method on a handful of experiments from the step-effect design
and tally how often each one moves away from the treat-all status quo, and
how much true gain it delivers when it does.
"""

import numpy as np

from cspi import METHODS, CriticalValueSpec, CutoffGrid, MethodConfig, NuisanceModelSpec, SplitSpec
from cspi import SyntheticSpec, TrueValueOracle, generate, run_method
from cspi.dgp import DGP2_THRESHOLDS

gamma, reps = 0.05, 100
grid = CutoffGrid.linspace(-2, 2, 41, baseline=-2.0)
oracle = TrueValueOracle("DGP2")
# Step indicators make the outcome model exact for this design.
nuisance = NuisanceModelSpec(outcome="ols", thresholds=DGP2_THRESHOLDS)

passes = {m: 0 for m in METHODS}
gains = {m: [] for m in METHODS}
for rep in range(reps):
    data = generate(SyntheticSpec("DGP2", 2000, seed=rep))
    for m in METHODS:
        cfg = MethodConfig(m, gamma, grid, SplitSpec(0.2, rep, 5), nuisance, CriticalValueSpec(5000, rep))
        out = run_method(data, cfg)
        passes[m] += out.changed
        gains[m].append(float(oracle(out.final_cutoff)))

print(f"{'method':<12} {'pass rate':>9} {'mean gain':>9} {'worse':>6}")
for m in METHODS:
    g = np.array(gains[m])
    print(f"{m:<12} {passes[m] / reps:9.2f} {g.mean():9.4f} {np.mean(g < 0):6.2f}")

# The Hoeffding version needs a range bound on the weighted outcomes and
# almost never clears it at this sample size. The t-test version is valid
# but weights out the covariates and so has far wider intervals than the
# doubly-robust tests.
#
# Picking the best point estimate looks strong here only because almost
# every cutoff beats treat-all on this design. The next demo shows what it
# does when none does.
