"""Cutoff selection on the tuning split."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimator import PolicyDiffEstimate
from .inference import (
    CriticalValueSpec,
    critical_from_minima,
    standardized_draws,
    std_normal_cdf,
    std_normal_quantile,
)


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Cutoffs chosen for testing plus per-candidate diagnostics.

    ``eta`` is NaN for grid points that were not eligible candidates in
    multi-cutoff selection. ``steps`` records the greedy loop as
    ``(cutoff, eta, z, accepted)`` tuples.
    """

    chosen: np.ndarray
    anchor: float
    cutoffs: np.ndarray
    pass_probs: np.ndarray
    tau_hat: np.ndarray
    sigma: np.ndarray
    objective: np.ndarray
    eta: np.ndarray | None = None
    steps: list = field(default_factory=list)


def passing_probability(tau, sigma2, n_test: int, gamma: float):
    """Forecast probability that a cutoff's test-split lower bound exceeds zero.

    Evaluates ``P(N(tau, sigma2 / n_test) > sqrt(sigma2 / n_test) * z_{1-gamma})``
    as ``Phi(tau * sqrt(n_test / sigma2) - z_{1-gamma})``. A zero variance
    yields 1 when ``tau > 0`` and 0 otherwise.
    """
    if n_test < 1:
        raise ValueError("n_test must be positive")
    tau = np.asarray(tau, dtype=float)
    sigma2 = np.clip(np.asarray(sigma2, dtype=float), 0.0, None)
    z = std_normal_quantile(1 - gamma)
    pos = sigma2 > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(pos, tau * np.sqrt(n_test / np.where(pos, sigma2, 1.0)) - z, 0.0)
    out = np.where(pos, std_normal_cdf(stat), (tau > 0).astype(float))
    return float(out) if out.ndim == 0 else out


def argmax_tiebreak(values: np.ndarray, cutoffs: np.ndarray, baseline: float) -> int:
    """Index of the maximum; ties go to the cutoff closest to ``baseline``, then the smallest."""
    values = np.asarray(values, dtype=float)
    order = np.lexsort((cutoffs, np.abs(cutoffs - baseline), -values))
    return int(order[0])


def select_single(est: PolicyDiffEstimate, gamma: float, n_test: int) -> SelectionResult:
    """Pick the cutoff maximising ``passing probability * tau_hat``."""
    if len(est) == 0:
        raise ValueError("empty cutoff grid")
    probs = passing_probability(est.tau_hat, est.variances, n_test, gamma)
    probs = np.atleast_1d(probs)
    objective = probs * est.tau_hat
    j = argmax_tiebreak(objective, est.cutoffs, est.baseline)
    return SelectionResult(
        chosen=est.cutoffs[[j]],
        anchor=float(est.cutoffs[j]),
        cutoffs=est.cutoffs,
        pass_probs=probs,
        tau_hat=est.tau_hat,
        sigma=np.sqrt(est.variances),
        objective=objective,
    )


def anchor_correlations(sigma_hat: np.ndarray, anchor: int) -> np.ndarray:
    """Absolute correlation of every coordinate with the anchor (0 where undefined)."""
    var = np.clip(np.diag(sigma_hat), 0.0, None)
    denom = np.sqrt(var * var[anchor])
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(denom > 0, np.abs(sigma_hat[:, anchor]) / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(eta, 0.0, 1.0)


def select_multi(
    est: PolicyDiffEstimate, gamma: float, n_test: int, spec: CriticalValueSpec
) -> SelectionResult:
    """Greedy, correlation-ordered growth of a jointly testable cutoff set.

    Starts from the cutoff with the highest passing probability, then
    visits the cutoffs whose ``tau_hat`` is at least the anchor's in order
    of decreasing absolute correlation with the anchor. A candidate is
    kept while every member's projected sup-t lower bound stays positive;
    the loop stops at the first candidate that breaks this.

    One set of standardised normal draws is simulated for the anchor and
    all candidates; each tentative critical value is the sup-t quantile of
    the minimum over the tentative columns.
    """
    if len(est) == 0:
        raise ValueError("empty cutoff grid")
    c = est.cutoffs
    tau = est.tau_hat
    sd = np.sqrt(est.variances)
    probs = np.atleast_1d(passing_probability(tau, est.variances, n_test, gamma))
    a = argmax_tiebreak(probs, c, est.baseline)

    eta_all = anchor_correlations(est.sigma_hat, a)
    cand = np.flatnonzero(tau >= tau[a])
    cand = cand[cand != a]
    # descending eta, deterministic tie-break by distance to baseline then cutoff
    cand = cand[np.lexsort((c[cand], np.abs(c[cand] - est.baseline), -eta_all[cand]))]
    eta = np.full(c.shape[0], np.nan)
    eta[a] = 1.0
    eta[cand] = eta_all[cand]

    accepted = [a]
    steps = []
    if cand.size:
        members = np.concatenate(([a], cand))
        draws = standardized_draws(est.sigma_hat[np.ix_(members, members)], spec.n_sim, spec.seed)
        running = draws[:, 0].copy()
        scale = 1.0 / np.sqrt(n_test)
        for col, j in enumerate(cand, start=1):
            tentative = np.minimum(running, draws[:, col])
            z = critical_from_minima(tentative, gamma)
            idx = accepted + [j]
            bounds = tau[idx] - z * sd[idx] * scale
            ok = bool(np.all(bounds > 0))
            steps.append((float(c[j]), float(eta[j]), z, ok))
            if not ok:
                break
            accepted.append(j)
            running = tentative

    chosen_idx = np.sort(np.asarray(accepted))
    return SelectionResult(
        chosen=c[chosen_idx],
        anchor=float(c[a]),
        cutoffs=c,
        pass_probs=probs,
        tau_hat=tau,
        sigma=sd,
        objective=probs,
        eta=eta,
        steps=steps,
    )
