"""
Error rate when no improvement exists
=====================================

On the design where every cutoff is worse than treating nobody, any change
is an error. The calibrated tests keep the error rate near or below gamma,
while picking the best point estimate fails most of the time.
"""

import numpy as np

from cspi.harness import ExperimentPlan, run_plan

plan = ExperimentPlan(
    dgp="DGP3",
    methods=("CSPI", "CSPI-MT", "HCPI-ttest", "NAIVE"),
    gammas=tuple(np.round(np.linspace(0.05, 0.2, 4), 12)),
    replications=200,
    seed=0,
    n_sim=5000,
)
rows, _ = run_plan(plan)

print(f"{'gamma':>6} {'method':<11} {'error':>6} {'3-sigma limit':>13}")
for r in rows:
    limit = r.gamma + 3 * np.sqrt(r.gamma * (1 - r.gamma) / r.replications)
    print(f"{r.gamma:6.3f} {r.method:<11} {r.error_rate:6.3f} {limit:13.3f}")

# The same sweep from the command line, with CSV output for plotting:
#   cspi simulate --dgp DGP3 --methods CSPI,CSPI-MT,HCPI-ttest,NAIVE \
#       --gammas 0.05:0.2:4 --reps 200 --n-sim 5000 --out runs/dgp3
