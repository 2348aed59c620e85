"""
Simultaneous critical values
============================

A single lower bound uses the normal quantile. Testing several correlated
cutoffs at once needs a larger multiplier, which depends on how correlated
the estimates are.
"""

import numpy as np

from cspi import CriticalValueSpec, simulate_sup_t_critical, std_normal_quantile

gamma = 0.05
spec = CriticalValueSpec(n_sim=100_000, seed=1)
print(f"one cutoff, normal quantile: {std_normal_quantile(1 - gamma):.4f}")

for rho in (0.0, 0.5, 0.9, 0.99, 1.0):
    for l in (2, 5, 20):
        corr = np.full((l, l), rho)
        np.fill_diagonal(corr, 1.0)
        z = simulate_sup_t_critical(corr, gamma, spec)
        print(f"rho={rho:4.2f}  cutoffs={l:2d}  z*={z:.4f}")

# Independent coordinates give the Bonferroni-like worst case; perfectly
# correlated ones collapse back to the single-cutoff value. Neighbouring
# cutoffs on a grid are strongly correlated, so the price of testing many
# of them together is small.
