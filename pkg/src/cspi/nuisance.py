"""Cross-fitted outcome and propensity models."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import Dataset, fold_labels

OUTCOME_FAMILIES = ("ols", "logistic", "zero")
PROPENSITY_FAMILIES = ("constant", "sample-mean", "logistic")

RIDGE = 1e-8
IRLS_MAX_ITER = 100
IRLS_TOL = 1e-8


class NuisanceFitError(RuntimeError):
    """Raised when a training complement cannot support the requested model."""


@dataclass(frozen=True)
class NuisanceModelSpec:
    """Model families for the outcome regression and the propensity score.

    Parameters
    ----------
    outcome : {"ols", "logistic", "zero"}
        Per-arm least squares, per-arm logistic regression, or ``mu = 0``.
    propensity : {"constant", "sample-mean", "logistic"}
        Known constant, sample mean of ``A`` on the training complement, or
        logistic regression of ``A`` on the basis.
    propensity_value : float, optional
        Value used by the ``"constant"`` family.
    thresholds : tuple of float
        When nonempty, the basis is the raw covariates plus the score
        indicators ``1[S >= t]``.
    clip : float
        Emitted propensities are clipped to ``[clip, 1 - clip]``.
    """

    outcome: str = "ols"
    propensity: str = "sample-mean"
    propensity_value: Optional[float] = None
    thresholds: tuple = ()
    clip: float = 0.01

    def __post_init__(self):
        if self.outcome not in OUTCOME_FAMILIES:
            raise ValueError(f"unknown outcome family {self.outcome!r}")
        if self.propensity not in PROPENSITY_FAMILIES:
            raise ValueError(f"unknown propensity family {self.propensity!r}")
        if self.propensity == "constant":
            if self.propensity_value is None or not 0.0 < self.propensity_value < 1.0:
                raise ValueError("constant propensity requires a value in (0, 1)")
        if not 0.0 < self.clip < 0.5:
            raise ValueError("clip must lie in (0, 0.5)")
        th = tuple(float(t) for t in self.thresholds)
        if not all(np.isfinite(th)):
            raise ValueError("indicator thresholds must be finite")
        object.__setattr__(self, "thresholds", th)

    def with_constant_propensity(self, value: float) -> "NuisanceModelSpec":
        return replace(self, propensity="constant", propensity_value=float(value))


def design_matrix(X: np.ndarray, S: np.ndarray, thresholds: Sequence[float] = ()) -> np.ndarray:
    """Intercept, raw covariates and optional score indicators ``1[S >= t]``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    cols = [np.ones((X.shape[0], 1)), X]
    if len(thresholds):
        S = np.asarray(S, dtype=float).reshape(-1, 1)
        cols.append((S >= np.asarray(thresholds, dtype=float)[None, :]).astype(float))
    return np.hstack(cols)


def fit_least_squares(Z: np.ndarray, y: np.ndarray, ridge: float = RIDGE) -> np.ndarray:
    """Solve the ridge-stabilised normal equations ``(Z'Z + ridge I) b = Z'y``."""
    gram = Z.T @ Z
    gram[np.diag_indices_from(gram)] += ridge
    return np.linalg.solve(gram, Z.T @ y)


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def fit_logistic(
    Z: np.ndarray, y: np.ndarray, ridge: float = RIDGE, max_iter: int = IRLS_MAX_ITER, tol: float = IRLS_TOL
) -> np.ndarray:
    """Logistic regression by iteratively reweighted least squares.

    ``y`` may be any values in [0, 1]. Stops when the largest coefficient
    change drops below ``tol`` or after ``max_iter`` Newton steps.
    """
    beta = np.zeros(Z.shape[1])
    ybar = float(np.clip(np.mean(y), 1e-6, 1 - 1e-6))
    beta[0] = np.log(ybar / (1 - ybar))
    for _ in range(max_iter):
        p = _sigmoid(Z @ beta)
        w = np.maximum(p * (1 - p), 1e-12)
        hess = (Z * w[:, None]).T @ Z
        hess[np.diag_indices_from(hess)] += ridge
        step = np.linalg.solve(hess, Z.T @ (y - p) - ridge * beta)
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    return beta


@dataclass(frozen=True, eq=False)
class FittedNuisance:
    """Per-fold outcome and propensity predictors.

    ``mu_coef[k, a]`` holds the coefficients of arm ``a`` fitted without fold
    ``k``; ``e_coef[k]`` holds the propensity parameters for fold ``k`` (a
    constant in slot 0 for constant families).
    """

    spec: NuisanceModelSpec
    folds: tuple
    mu_coef: np.ndarray
    e_coef: np.ndarray

    @property
    def k(self) -> int:
        return len(self.folds)

    def _check_fold(self, fold: int):
        if not 0 <= fold < self.k:
            raise IndexError(f"fold {fold} out of range for {self.k} folds")

    def _mu(self, fold, a, Z):
        if self.spec.outcome == "zero":
            return np.zeros(Z.shape[0])
        eta = Z @ self.mu_coef[fold, a]
        return _sigmoid(eta) if self.spec.outcome == "logistic" else eta

    def _e(self, fold, Z):
        if self.spec.propensity == "logistic":
            e = _sigmoid(Z @ self.e_coef[fold])
        else:
            e = np.full(Z.shape[0], self.e_coef[fold, 0])
        return np.clip(e, self.spec.clip, 1 - self.spec.clip)

    def predict(self, fold: int, a: int, x, score=None):
        """Outcome prediction ``mu_k(a, x)`` from the model that held out ``fold``."""
        self._check_fold(fold)
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 1
        Z = design_matrix(np.atleast_2d(x), np.atleast_1d(score if score is not None else 0.0),
                          self._thresholds_for(score))
        out = self._mu(fold, int(a), Z)
        return float(out[0]) if scalar else out

    def predict_propensity(self, fold: int, x, score=None):
        """Clipped propensity ``e_k(x)`` from the model that held out ``fold``."""
        self._check_fold(fold)
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 1
        Z = design_matrix(np.atleast_2d(x), np.atleast_1d(score if score is not None else 0.0),
                          self._thresholds_for(score))
        out = self._e(fold, Z)
        return float(out[0]) if scalar else out

    def _thresholds_for(self, score):
        if self.spec.thresholds and score is None:
            raise ValueError("the score is required when the basis uses score indicators")
        return self.spec.thresholds

    def out_of_fold(self, data: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Held-out ``(mu0, mu1, e)`` for every row of the data used in fitting."""
        Z = design_matrix(data.X, data.S, self.spec.thresholds)
        mu0 = np.empty(data.n)
        mu1 = np.empty(data.n)
        e = np.empty(data.n)
        for k, idx in enumerate(self.folds):
            Zk = Z[idx]
            mu0[idx] = self._mu(k, 0, Zk)
            mu1[idx] = self._mu(k, 1, Zk)
            e[idx] = self._e(k, Zk)
        return mu0, mu1, e


def fit_cross_fitted(data: Dataset, folds: Sequence[np.ndarray], spec: NuisanceModelSpec) -> FittedNuisance:
    """Fit one outcome/propensity pair per fold on the complement of that fold."""
    folds = tuple(np.asarray(f, dtype=np.intp) for f in folds)
    labels = fold_labels(folds, data.n)
    Z = design_matrix(data.X, data.S, spec.thresholds)
    p = Z.shape[1]
    K = len(folds)
    mu_coef = np.zeros((K, 2, p))
    e_coef = np.zeros((K, p))
    A = data.A
    for k in range(K):
        train = labels != k
        Zt, At, Yt = Z[train], A[train], data.Y[train]
        if spec.outcome != "zero":
            for a in (0, 1):
                arm = At == a
                if not arm.any():
                    raise NuisanceFitError(f"treatment arm {a} is absent from the training complement of fold {k}")
                if spec.outcome == "ols":
                    mu_coef[k, a] = fit_least_squares(Zt[arm], Yt[arm])
                else:
                    mu_coef[k, a] = fit_logistic(Zt[arm], Yt[arm])
        if spec.propensity == "constant":
            e_coef[k, 0] = spec.propensity_value
        elif spec.propensity == "sample-mean":
            e_coef[k, 0] = At.mean()
        else:
            e_coef[k] = fit_logistic(Zt, At.astype(float))
    return FittedNuisance(spec=spec, folds=folds, mu_coef=mu_coef, e_coef=e_coef)
