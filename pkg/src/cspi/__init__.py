"""Calibrated safe improvement of threshold policies (CSPI / CSPI-MT) with HCPI baselines."""
from .core import (
    CutoffGrid,
    Dataset,
    Observation,
    SizingError,
    SplitSpec,
    derive_seed,
    k_fold_indices,
    split_tune_test,
)
from .dgp import SyntheticSpec, TrueValueOracle, bootstrap, generate, load_csv, true_policy_diff
from .estimator import PolicyDiffEstimate, estimate_policy_diffs, influence_contribution, ipw_policy_diffs
from .inference import (
    CriticalValueSpec,
    SafetyDecision,
    multi_cutoff_test,
    simulate_sup_t_critical,
    single_cutoff_test,
    std_normal_cdf,
    std_normal_quantile,
)
from .nuisance import FittedNuisance, NuisanceFitError, NuisanceModelSpec, fit_cross_fitted
from .pipeline import (
    METHODS,
    MethodConfig,
    MethodOutcome,
    run_cspi,
    run_cspi_mt,
    run_hcpi_finite,
    run_hcpi_ttest,
    run_method,
    run_naive,
)
from .selection import SelectionResult, passing_probability, select_multi, select_single

__version__ = "0.1.0"
