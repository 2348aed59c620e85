"""Doubly-robust and importance-weighted estimates of threshold policy differences.

For a candidate cutoff ``c`` and baseline ``c0`` every observation contributes

    sign(c0, c) * 1[S in (min(c0, c), max(c0, c))] * (psi0 - psi1)

where ``sign = +1`` if ``c0 < c`` and ``-1`` otherwise, and ``psi1``/``psi0``
are the augmented inverse-propensity scores of the treated/control arms.
The policy difference is the mean of these contributions and the
covariance is their centred second-moment matrix (per-observation scale,
not divided by ``n``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import Dataset
from .nuisance import FittedNuisance


@dataclass(frozen=True, eq=False)
class PolicyDiffEstimate:
    """Estimated policy differences over a set of cutoffs.

    Attributes
    ----------
    cutoffs : ndarray of shape (l,)
    baseline : float
    tau_hat : ndarray of shape (l,)
    sigma_hat : ndarray of shape (l, l)
        Covariance of the per-observation contributions. Divide by the
        relevant sample size to obtain the sampling covariance of ``tau_hat``.
    n : int
    influence : ndarray of shape (n, l), optional
        The contributions themselves.
    """

    cutoffs: np.ndarray
    baseline: float
    tau_hat: np.ndarray
    sigma_hat: np.ndarray
    n: int
    influence: Optional[np.ndarray] = None

    @classmethod
    def from_influence(cls, cutoffs, baseline: float, influence: np.ndarray) -> "PolicyDiffEstimate":
        influence = np.asarray(influence, dtype=float)
        n = influence.shape[0]
        tau = influence.mean(axis=0)
        centred = influence - tau
        sigma = centred.T @ centred / n
        sigma = 0.5 * (sigma + sigma.T)
        return cls(np.asarray(cutoffs, dtype=float), float(baseline), tau, sigma, n, influence)

    def __len__(self) -> int:
        return self.cutoffs.shape[0]

    @property
    def variances(self) -> np.ndarray:
        return np.clip(np.diag(self.sigma_hat), 0.0, None)

    def std_errors(self, n_test: int) -> np.ndarray:
        """Standard errors of ``tau_hat`` as if estimated on ``n_test`` rows."""
        return np.sqrt(self.variances / n_test)

    def subset(self, idx) -> "PolicyDiffEstimate":
        idx = np.atleast_1d(np.asarray(idx, dtype=np.intp))
        infl = None if self.influence is None else self.influence[:, idx]
        return PolicyDiffEstimate(
            self.cutoffs[idx], self.baseline, self.tau_hat[idx],
            self.sigma_hat[np.ix_(idx, idx)], self.n, infl,
        )


def _direction(cutoffs: np.ndarray, c0: float, S: np.ndarray) -> np.ndarray:
    """``sign(c0, c) * 1[S in (min, max)]`` as an (n, l) array."""
    lo = np.minimum(cutoffs, c0)[None, :]
    hi = np.maximum(cutoffs, c0)[None, :]
    s = S[:, None]
    inside = (s > lo) & (s < hi)
    sign = np.where(c0 >= cutoffs, -1.0, 1.0)[None, :]
    return inside * sign


def aipw_scores(A, Y, mu0, mu1, e) -> tuple[np.ndarray, np.ndarray]:
    """Augmented IPW scores ``(psi1, psi0)`` for each observation."""
    A = np.asarray(A, dtype=float)
    Y = np.asarray(Y, dtype=float)
    psi1 = Y * A / e - mu1 * (A - e) / e
    psi0 = Y * (1 - A) / (1 - e) - mu0 * (e - A) / (1 - e)
    return psi1, psi0


def influence_contribution(obs, c: float, c0: float, mu, e) -> float:
    """Contribution of a single observation to the difference at cutoff ``c``.

    Parameters
    ----------
    obs : Observation
    mu : callable ``(a, x) -> float``
        Held-out outcome model for the observation's fold.
    e : callable ``x -> float``
        Held-out propensity model for the observation's fold.
    """
    lo, hi = min(c0, c), max(c0, c)
    if not lo < obs.score < hi:
        return 0.0
    ek = e(obs.covariates)
    psi1, psi0 = aipw_scores(obs.treatment, obs.outcome, mu(0, obs.covariates), mu(1, obs.covariates), ek)
    sign = -1.0 if c0 >= c else 1.0
    return float(sign * (psi0 - psi1))


def influence_matrix(S, A, Y, mu0, mu1, e, cutoffs, c0: float) -> np.ndarray:
    """(n, l) matrix of per-observation contributions for every cutoff."""
    cutoffs = np.atleast_1d(np.asarray(cutoffs, dtype=float))
    psi1, psi0 = aipw_scores(A, Y, mu0, mu1, e)
    return _direction(cutoffs, float(c0), np.asarray(S, dtype=float)) * (psi0 - psi1)[:, None]


def estimate_policy_diffs(
    data: Dataset, cutoffs: Sequence[float], c0: float, nuisance: FittedNuisance
) -> PolicyDiffEstimate:
    """Cross-fitted doubly-robust policy differences and their covariance.

    Each observation is scored with the nuisance models fitted without its
    own fold.
    """
    cutoffs = np.atleast_1d(np.asarray(cutoffs, dtype=float))
    if cutoffs.size == 0:
        raise ValueError("at least one cutoff is required")
    if data.n == 0:
        raise ValueError("cannot estimate on an empty dataset")
    mu0, mu1, e = nuisance.out_of_fold(data)
    infl = influence_matrix(data.S, data.A, data.Y, mu0, mu1, e, cutoffs, c0)
    return PolicyDiffEstimate.from_influence(cutoffs, c0, infl)


PropensityLike = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _resolve_propensity(e: PropensityLike, data: Dataset) -> np.ndarray:
    if callable(e):
        e = e(data.X)
    return np.broadcast_to(np.asarray(e, dtype=float), (data.n,))


def ipw_policy_diffs(data: Dataset, cutoffs: Sequence[float], c0: float, e: PropensityLike) -> PolicyDiffEstimate:
    """Importance-weighted policy differences using a given propensity.

    ``e`` may be a constant, a per-row array, or a callable on the covariate
    matrix. No outcome model and no cross-fitting are involved.
    """
    cutoffs = np.atleast_1d(np.asarray(cutoffs, dtype=float))
    if cutoffs.size == 0:
        raise ValueError("at least one cutoff is required")
    ev = _resolve_propensity(e, data)
    A = data.A.astype(float)
    psi1 = data.Y * A / ev
    psi0 = data.Y * (1 - A) / (1 - ev)
    infl = _direction(cutoffs, float(c0), data.S) * (psi0 - psi1)[:, None]
    return PolicyDiffEstimate.from_influence(cutoffs, c0, infl)
