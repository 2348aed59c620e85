"""Domain types, dataset container and seeded splitting utilities."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np


class SizingError(ValueError):
    """Raised when a split or fold request cannot be satisfied."""


class Observation(NamedTuple):
    """One unit's record: covariates, score, treatment and outcome."""

    covariates: np.ndarray
    score: float
    treatment: int
    outcome: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented container of observations.

    Parameters
    ----------
    X : ndarray of shape (n, d)
        Pretreatment covariates.
    S : ndarray of shape (n,)
        Score used by the threshold policies, ``S = g(X)``.
    A : ndarray of shape (n,)
        Binary treatment indicator.
    Y : ndarray of shape (n,)
        Observed outcome.
    """

    X: np.ndarray
    S: np.ndarray
    A: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        S = np.asarray(self.S, dtype=float).reshape(-1)
        A = np.asarray(self.A).reshape(-1)
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        n = S.shape[0]
        if X.ndim != 2 or X.shape[0] != n or A.shape[0] != n or Y.shape[0] != n:
            raise ValueError("X, S, A and Y must have the same number of rows")
        if X.shape[1] < 1:
            raise ValueError("covariate dimension must be positive")
        if not np.all((A == 0) | (A == 1)):
            raise ValueError("treatment must be binary (0/1)")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(S)) and np.all(np.isfinite(Y))):
            raise ValueError("covariates, scores and outcomes must be finite")
        for name, value in (("X", X), ("S", S), ("A", A.astype(np.int8)), ("Y", Y)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def from_observations(cls, observations: Sequence[Observation], d: int | None = None) -> "Dataset":
        if len(observations) == 0:
            raise ValueError("at least one observation is required")
        X = np.array([np.asarray(o.covariates, dtype=float).reshape(-1) for o in observations])
        if d is not None and X.shape[1] != d:
            raise ValueError(f"covariates have dimension {X.shape[1]}, expected {d}")
        return cls(
            X=X,
            S=np.array([o.score for o in observations], dtype=float),
            A=np.array([o.treatment for o in observations]),
            Y=np.array([o.outcome for o in observations], dtype=float),
        )

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Observation:
        return Observation(self.X[i], float(self.S[i]), int(self.A[i]), float(self.Y[i]))

    def __iter__(self) -> Iterator[Observation]:
        return (self[i] for i in range(self.n))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.S[idx], self.A[idx], self.Y[idx])

    def with_outcomes(self, Y) -> "Dataset":
        return Dataset(self.X, self.S, self.A, Y)


@dataclass(frozen=True)
class CutoffGrid:
    """Candidate cutoffs plus the baseline cutoff ``c0``."""

    cutoffs: tuple
    baseline: float

    def __post_init__(self):
        c = np.asarray(self.cutoffs, dtype=float).reshape(-1)
        if c.size == 0:
            raise ValueError("cutoff grid must be nonempty")
        if not np.all(np.isfinite(c)) or not math.isfinite(self.baseline):
            raise ValueError("cutoffs must be finite")
        if np.any(np.diff(c) <= 0):
            raise ValueError("cutoffs must be strictly increasing")
        object.__setattr__(self, "cutoffs", tuple(float(v) for v in c))
        object.__setattr__(self, "baseline", float(self.baseline))

    @classmethod
    def linspace(cls, lo: float, hi: float, num: int, baseline: float) -> "CutoffGrid":
        return cls(tuple(np.linspace(lo, hi, num)), baseline)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.cutoffs, dtype=float)

    def __len__(self) -> int:
        return len(self.cutoffs)


@dataclass(frozen=True)
class SplitSpec:
    """Tuning fraction ``zeta``, split seed and number of cross-fitting folds."""

    zeta: float = 0.2
    seed: int = 0
    k_folds: int = 5

    def __post_init__(self):
        if not 0.0 < self.zeta < 1.0:
            raise ValueError("zeta must lie in (0, 1)")
        if self.k_folds < 2:
            raise ValueError("k_folds must be at least 2")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def derive_seed(base: int, *keys: int) -> int:
    """Derive an independent 64-bit seed from a base seed and integer keys."""
    ss = np.random.SeedSequence([int(base), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def split_indices(n: int, zeta: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Return sorted (tune, test) index arrays with ``floor(zeta * n)`` tuning rows."""
    m = int(math.floor(zeta * n))
    if m < 1 or n - m < 1:
        raise SizingError(f"split of n={n} with zeta={zeta} leaves an empty side")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:m]), np.sort(perm[m:])


def split_tune_test(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Randomly allocate a ``zeta`` fraction of ``data`` to the tuning set."""
    tune, test = split_indices(data.n, spec.zeta, spec.seed)
    return data.subset(tune), data.subset(test)


def k_fold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Partition ``range(n)`` into ``k`` random folds whose sizes differ by at most one."""
    if k < 2:
        raise SizingError("k must be at least 2")
    if k > n:
        raise SizingError(f"cannot build {k} folds from {n} observations")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def fold_labels(folds: Sequence[np.ndarray], n: int) -> np.ndarray:
    """Map a list of fold index sets to a per-observation fold label array."""
    labels = np.full(n, -1, dtype=np.intp)
    for k, idx in enumerate(folds):
        labels[idx] = k
    if np.any(labels < 0):
        raise ValueError("folds do not cover every observation")
    return labels
