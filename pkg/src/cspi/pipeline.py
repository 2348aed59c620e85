"""End-to-end safe policy improvement methods.

Every method splits the data once into a tuning and a test set, selects
candidate cutoff(s) on the tuning set, tests them on the test set, and
falls back to the baseline cutoff when nothing passes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import CutoffGrid, Dataset, SplitSpec, derive_seed, k_fold_indices, split_indices
from .estimator import PolicyDiffEstimate, estimate_policy_diffs, ipw_policy_diffs
from .inference import (
    CriticalValueSpec,
    SafetyDecision,
    multi_cutoff_test,
    single_cutoff_test,
    std_normal_quantile,
)
from .nuisance import NuisanceModelSpec, fit_cross_fitted
from .selection import SelectionResult, argmax_tiebreak, select_multi, select_single

METHODS = ("CSPI", "CSPI-MT", "HCPI-finite", "HCPI-ttest", "NAIVE")

# seed-derivation tags
_TUNE_FOLDS, _TEST_FOLDS, _FULL_FOLDS = 1, 2, 3
_SELECT_SIM, _TEST_SIM = 1, 2


@dataclass(frozen=True)
class MethodConfig:
    """Everything a method needs besides the data.

    ``pooled_propensity`` replaces a ``"sample-mean"`` propensity by the
    treated fraction of the whole dataset before any split or fold is
    fitted. HCPI baselines always use that pooled mean.
    """

    method: str
    gamma: float
    grid: CutoffGrid
    split: SplitSpec = SplitSpec()
    nuisance: NuisanceModelSpec = NuisanceModelSpec()
    critical: CriticalValueSpec = CriticalValueSpec()
    hcpi_range_bound: float = 66.0
    hcpi_inflation: float = 2.0
    pooled_propensity: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not 0.0 < self.gamma <= 0.5:
            raise ValueError("gamma must lie in (0, 0.5]")
        if self.hcpi_range_bound <= 0:
            raise ValueError("hcpi_range_bound must be positive")
        if self.hcpi_inflation < 1:
            raise ValueError("hcpi_inflation must be at least 1")

    def with_method(self, method: str) -> "MethodConfig":
        return replace(self, method=method)


@dataclass(frozen=True, eq=False)
class MethodOutcome:
    final_cutoff: float
    passed_set: np.ndarray
    changed: bool
    selection: Optional[SelectionResult] = None
    decision: Optional[SafetyDecision] = None
    full_estimate: Optional[PolicyDiffEstimate] = None
    extras: dict = field(default_factory=dict)


def _fit_estimate(data: Dataset, cutoffs, c0: float, spec: NuisanceModelSpec, k: int, seed: int) -> PolicyDiffEstimate:
    folds = k_fold_indices(data.n, k, seed)
    nuis = fit_cross_fitted(data, folds, spec)
    return estimate_policy_diffs(data, cutoffs, c0, nuis)


def _resolve_nuisance(data: Dataset, cfg: MethodConfig) -> NuisanceModelSpec:
    spec = cfg.nuisance
    if cfg.pooled_propensity and spec.propensity == "sample-mean":
        spec = spec.with_constant_propensity(_pooled_mean(data, spec.clip))
    return spec


def _pooled_mean(data: Dataset, clip: float = 0.01) -> float:
    return float(np.clip(data.A.mean(), clip, 1 - clip))


def _split(data: Dataset, cfg: MethodConfig) -> tuple[Dataset, Dataset]:
    tune, test = split_indices(data.n, cfg.split.zeta, cfg.split.seed)
    return data.subset(tune), data.subset(test)


def _outcome(c0: float, decision: SafetyDecision, selection=None, **extras) -> MethodOutcome:
    passed = decision.passed_cutoffs
    if passed.size == 0:
        return MethodOutcome(c0, passed, False, selection, decision, extras=extras)
    final = float(passed[0])
    return MethodOutcome(final, passed, final != c0, selection, decision, extras=extras)


def run_cspi(data: Dataset, cfg: MethodConfig) -> MethodOutcome:
    """Single-cutoff selection on the tuning split and a normal test on the test split."""
    c0 = cfg.grid.baseline
    spec = _resolve_nuisance(data, cfg)
    tune, test = _split(data, cfg)
    k, seed = cfg.split.k_folds, cfg.split.seed
    est_tune = _fit_estimate(tune, cfg.grid.values, c0, spec, k, derive_seed(seed, _TUNE_FOLDS))
    sel = select_single(est_tune, cfg.gamma, test.n)
    est_test = _fit_estimate(test, sel.chosen, c0, spec, k, derive_seed(seed, _TEST_FOLDS))
    decision = single_cutoff_test(est_test, cfg.gamma, test.n)
    return _outcome(c0, decision, sel, tune_estimate=est_tune, test_estimate=est_test)


def run_cspi_mt(data: Dataset, cfg: MethodConfig) -> MethodOutcome:
    """Greedy multi-cutoff selection, joint sup-t test, full-data argmax among passes."""
    c0 = cfg.grid.baseline
    spec = _resolve_nuisance(data, cfg)
    tune, test = _split(data, cfg)
    k, seed = cfg.split.k_folds, cfg.split.seed
    est_tune = _fit_estimate(tune, cfg.grid.values, c0, spec, k, derive_seed(seed, _TUNE_FOLDS))
    sel_spec = replace(cfg.critical, seed=derive_seed(cfg.critical.seed, _SELECT_SIM))
    sel = select_multi(est_tune, cfg.gamma, test.n, sel_spec)
    est_test = _fit_estimate(test, sel.chosen, c0, spec, k, derive_seed(seed, _TEST_FOLDS))
    test_spec = replace(cfg.critical, seed=derive_seed(cfg.critical.seed, _TEST_SIM))
    decision = multi_cutoff_test(est_test, cfg.gamma, test.n, test_spec)
    passed = decision.passed_cutoffs
    extras = dict(tune_estimate=est_tune, test_estimate=est_test)
    if passed.size == 0:
        return MethodOutcome(c0, passed, False, sel, decision, extras=extras)
    if passed.size == 1:
        final = float(passed[0])
        return MethodOutcome(final, passed, final != c0, sel, decision, extras=extras)
    full = _fit_estimate(data, passed, c0, spec, k, derive_seed(seed, _FULL_FOLDS))
    final = float(passed[argmax_tiebreak(full.tau_hat, passed, c0)])
    return MethodOutcome(final, passed, final != c0, sel, decision, full, extras)


def hoeffding_width(range_bound: float, gamma: float, n: int) -> float:
    """One-sided Hoeffding half-width ``B * sqrt(2 log(1/gamma) / n)``."""
    return range_bound * math.sqrt(2.0 * math.log(1.0 / gamma) / n)


def run_hcpi_finite(data: Dataset, cfg: MethodConfig) -> MethodOutcome:
    """IPW differences with Hoeffding lower bounds (finite-sample HCPI)."""
    c0 = cfg.grid.baseline
    e = _pooled_mean(data, cfg.nuisance.clip)
    tune, test = _split(data, cfg)
    est_tune = ipw_policy_diffs(tune, cfg.grid.values, c0, e)
    predicted = est_tune.tau_hat - cfg.hcpi_inflation * hoeffding_width(cfg.hcpi_range_bound, cfg.gamma, test.n)
    j = argmax_tiebreak(predicted, est_tune.cutoffs, c0)
    est_test = ipw_policy_diffs(test, est_tune.cutoffs[[j]], c0, e)
    width = hoeffding_width(cfg.hcpi_range_bound, cfg.gamma, test.n)
    lb = est_test.tau_hat - width
    decision = SafetyDecision(
        est_test.cutoffs, lb, math.sqrt(2.0 * math.log(1.0 / cfg.gamma)), cfg.gamma, lb > 0, test.n
    )
    return _outcome(c0, decision, predicted_bounds=predicted, tune_estimate=est_tune, test_estimate=est_test)


def run_hcpi_ttest(data: Dataset, cfg: MethodConfig) -> MethodOutcome:
    """IPW differences with normal lower bounds (t-test HCPI)."""
    c0 = cfg.grid.baseline
    e = _pooled_mean(data, cfg.nuisance.clip)
    tune, test = _split(data, cfg)
    est_tune = ipw_policy_diffs(tune, cfg.grid.values, c0, e)
    z = std_normal_quantile(1 - cfg.gamma)
    predicted = est_tune.tau_hat - cfg.hcpi_inflation * z * est_tune.std_errors(test.n)
    j = argmax_tiebreak(predicted, est_tune.cutoffs, c0)
    est_test = ipw_policy_diffs(test, est_tune.cutoffs[[j]], c0, e)
    decision = single_cutoff_test(est_test, cfg.gamma, test.n)
    return _outcome(c0, decision, predicted_bounds=predicted, tune_estimate=est_tune, test_estimate=est_test)


def run_naive(data: Dataset, cfg: MethodConfig) -> MethodOutcome:
    """Largest full-data estimated gain, no safety test."""
    c0 = cfg.grid.baseline
    spec = _resolve_nuisance(data, cfg)
    est = _fit_estimate(data, cfg.grid.values, c0, spec, cfg.split.k_folds, derive_seed(cfg.split.seed, _FULL_FOLDS))
    j = argmax_tiebreak(est.tau_hat, est.cutoffs, c0)
    final = float(est.cutoffs[j])
    return MethodOutcome(final, est.cutoffs[[j]], final != c0, full_estimate=est)


_DISPATCH = {
    "CSPI": run_cspi,
    "CSPI-MT": run_cspi_mt,
    "HCPI-finite": run_hcpi_finite,
    "HCPI-ttest": run_hcpi_ttest,
    "NAIVE": run_naive,
}


def run_method(data: Dataset, cfg: MethodConfig) -> MethodOutcome:
    """Run the method named in ``cfg.method``."""
    return _DISPATCH[cfg.method](data, cfg)
