"""Normal primitives, sup-t critical values and the safety tests."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .estimator import PolicyDiffEstimate

logger = logging.getLogger(__name__)


def std_normal_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(x)


def std_normal_quantile(p):
    """Standard normal quantile function; ``p`` must lie strictly inside (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0) & (arr < 1))):
        raise ValueError("p must lie in the open interval (0, 1)")
    out = special.ndtri(arr)
    return float(out) if np.ndim(out) == 0 else out


def _check_gamma(gamma: float):
    if not 0.0 < gamma <= 0.5:
        raise ValueError("gamma must lie in (0, 0.5]")


@dataclass(frozen=True)
class CriticalValueSpec:
    """Number of Monte-Carlo draws and seed for the sup-t critical value."""

    n_sim: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.n_sim < 1:
            raise ValueError("n_sim must be positive")


@dataclass(frozen=True, eq=False)
class SafetyDecision:
    """Lower confidence bounds and pass flags for a set of tested cutoffs."""

    cutoffs: np.ndarray
    lower_bounds: np.ndarray
    critical_value: float
    gamma: float
    passed: np.ndarray
    n_test: int
    degenerate: bool = False

    @property
    def passed_cutoffs(self) -> np.ndarray:
        return self.cutoffs[self.passed]


def correlation_sqrt(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square root of the correlation matrix of ``sigma``.

    Returns ``(root, active)`` where ``active`` flags coordinates with a
    strictly positive variance; the root covers the active block only.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    sd = np.sqrt(np.clip(np.diag(sigma), 0.0, None))
    active = sd > 0
    s = sd[active]
    corr = sigma[np.ix_(active, active)] / np.outer(s, s)
    corr = 0.5 * (corr + corr.T)
    w, Q = np.linalg.eigh(corr)
    root = (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T
    return root, active


def standardized_draws(sigma: np.ndarray, n_sim: int, seed: int) -> np.ndarray:
    """Draws of ``V_j / sd_j`` with ``V ~ N(0, sigma)``, shape (n_sim, l).

    Zero-variance coordinates are filled with ``+inf`` so they never
    attain a minimum.
    """
    root, active = correlation_sqrt(sigma)
    l = active.shape[0]
    out = np.full((n_sim, l), np.inf)
    if active.any():
        z = np.random.default_rng(seed).standard_normal((n_sim, root.shape[0]))
        out[:, active] = z @ root
    return out


def lower_quantile(x: np.ndarray, gamma: float) -> float:
    """Type-1 (inverse empirical CDF) lower ``gamma`` quantile."""
    n = x.shape[0]
    k = max(int(math.ceil(gamma * n - 1e-9)) - 1, 0)
    return float(np.partition(x, k)[k])


def critical_from_minima(minima: np.ndarray, gamma: float) -> float:
    """Absolute value of the lower ``gamma`` quantile of the per-draw minima."""
    finite = minima[np.isfinite(minima)]
    if finite.size == 0:
        return float(std_normal_quantile(1 - gamma))
    return abs(lower_quantile(minima, gamma))


def simulate_sup_t_critical(sigma: np.ndarray, gamma: float, spec: CriticalValueSpec) -> float:
    """Simulated sup-t critical value ``z*`` for joint one-sided lower bounds.

    Draws ``n_sim`` vectors from ``N(0, sigma)``, standardises each
    coordinate, takes the minimum across coordinates and returns the
    magnitude of the lower ``gamma`` quantile of those minima. A covariance
    with no positive variance falls back to the one-sided normal quantile.
    """
    _check_gamma(gamma)
    draws = standardized_draws(sigma, spec.n_sim, spec.seed)
    if not np.isfinite(draws).any():
        logger.debug("degenerate covariance, using the single-cutoff quantile")
        return float(std_normal_quantile(1 - gamma))
    return critical_from_minima(draws.min(axis=1), gamma)


def single_cutoff_test(est: PolicyDiffEstimate, gamma: float, n_test: int) -> SafetyDecision:
    """One-sided normal test of ``tau(c) > 0`` at a single cutoff."""
    _check_gamma(gamma)
    if len(est) != 1:
        raise ValueError("single_cutoff_test expects exactly one cutoff")
    if n_test < 1:
        raise ValueError("n_test must be positive")
    z = float(std_normal_quantile(1 - gamma))
    lb = est.tau_hat - z * est.std_errors(n_test)
    return SafetyDecision(est.cutoffs.copy(), lb, z, gamma, lb > 0, n_test)


def multi_cutoff_test(
    est: PolicyDiffEstimate, gamma: float, n_test: int, spec: CriticalValueSpec
) -> SafetyDecision:
    """Simultaneous one-sided test over several cutoffs with a sup-t critical value."""
    _check_gamma(gamma)
    if len(est) < 1:
        raise ValueError("at least one cutoff is required")
    if n_test < 1:
        raise ValueError("n_test must be positive")
    degenerate = not np.any(est.variances > 0)
    z = simulate_sup_t_critical(est.sigma_hat, gamma, spec)
    lb = est.tau_hat - z * est.std_errors(n_test)
    return SafetyDecision(est.cutoffs.copy(), lb, z, gamma, lb > 0, n_test, degenerate)
