"""Synthetic data generators, analytic policy-difference oracles and CSV ingestion.

All three synthetic designs share ``X = (S, X1, X2)`` with
``S ~ Unif[-2, 2]``, ``X1, X2 ~ N(0, 25)``, ``e(X) = 1/2`` and

    Y(0) = 2 X1 - 3 X2 + eps,    Y(1) = f(S) - 2 X1 - 3 X2 + eps,

with ``eps ~ N(0, 25)`` and

    DGP1: f(s) = s
    DGP2: f(s) = 4 * 1[s >= 1.5] - 2 * 1[s <= -1.5]
    DGP3: f(s) = -0.25
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import Dataset

DGPS = ("DGP1", "DGP2", "DGP3")
SCORE_LO, SCORE_HI = -2.0, 2.0
NOISE_SD = 5.0

# baseline cutoff per design: treat none (2) or treat all (-2)
DEFAULT_BASELINE = {"DGP1": 2.0, "DGP2": -2.0, "DGP3": 2.0}

# basis thresholds that make the DGP2 outcome model exactly linear
DGP2_THRESHOLDS = (-1.5, 1.5)


def _check_dgp(dgp_id: str) -> str:
    key = dgp_id.upper()
    if key not in DGPS:
        raise ValueError(f"unknown DGP {dgp_id!r}; expected one of {DGPS}")
    return key


def effect_function(dgp_id: str, s):
    """Score-dependent treatment effect ``f(s)``."""
    s = np.asarray(s, dtype=float)
    key = _check_dgp(dgp_id)
    if key == "DGP1":
        return s.copy()
    if key == "DGP2":
        return 4.0 * (s >= 1.5) - 2.0 * (s <= -1.5)
    return np.full_like(s, -0.25)


def _effect_antiderivative(dgp_id: str, s):
    """``F(s) = int_{-2}^{s} f(u) du`` for ``s`` in [-2, 2]."""
    s = np.clip(np.asarray(s, dtype=float), SCORE_LO, SCORE_HI)
    key = _check_dgp(dgp_id)
    if key == "DGP1":
        return 0.5 * (s**2 - 4.0)
    if key == "DGP2":
        return -2.0 * (np.minimum(s, -1.5) + 2.0) + 4.0 * np.maximum(s - 1.5, 0.0)
    return -0.25 * (s + 2.0)


@dataclass(frozen=True)
class SyntheticSpec:
    dgp_id: str
    n: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dgp_id", _check_dgp(self.dgp_id))
        if self.n < 1:
            raise ValueError("n must be positive")


def potential_outcomes(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``(X, Y0, Y1, A)`` for ``spec.n`` units; ``X[:, 0]`` is the score."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    S = rng.uniform(SCORE_LO, SCORE_HI, n)
    X1 = rng.normal(0.0, NOISE_SD, n)
    X2 = rng.normal(0.0, NOISE_SD, n)
    eps = rng.normal(0.0, NOISE_SD, n)
    A = (rng.random(n) < 0.5).astype(np.int8)
    base = -3.0 * X2 + eps
    Y0 = 2.0 * X1 + base
    Y1 = effect_function(spec.dgp_id, S) - 2.0 * X1 + base
    return np.column_stack([S, X1, X2]), Y0, Y1, A


def generate(spec: SyntheticSpec) -> Dataset:
    """Sample an observed dataset from one of the synthetic designs."""
    X, Y0, Y1, A = potential_outcomes(spec)
    return Dataset(X=X, S=X[:, 0], A=A, Y=np.where(A == 1, Y1, Y0))


@dataclass(frozen=True)
class TrueValueOracle:
    """Closed-form ``tau(c) = V(pi(c)) - V(pi(c0))`` for a synthetic design."""

    dgp_id: str
    baseline: Optional[float] = None

    def __post_init__(self):
        key = _check_dgp(self.dgp_id)
        object.__setattr__(self, "dgp_id", key)
        if self.baseline is None:
            object.__setattr__(self, "baseline", DEFAULT_BASELINE[key])

    def __call__(self, c):
        return true_policy_diff(self, c)


def true_policy_diff(oracle: TrueValueOracle, c):
    """True policy difference at cutoff(s) ``c``.

    Only the score-dependent effect survives the expectation, so the
    difference is a signed integral of ``f`` against the uniform density
    1/4 over the scores where the two threshold policies disagree.
    """
    c = np.asarray(c, dtype=float)
    c0 = float(oracle.baseline)
    F = lambda s: _effect_antiderivative(oracle.dgp_id, s)  # noqa: E731
    # treating [c, c0) when c < c0 gains the integral; dropping [c0, c) loses it
    val = 0.25 * (F(c0) - F(c))
    out = np.where(c == c0, 0.0, val)
    return float(out) if out.ndim == 0 else out


class SchemaError(ValueError):
    """Raised for missing columns, malformed rows or invalid weights."""


@dataclass(frozen=True, eq=False)
class ExternalTable:
    """Parsed external experiment log."""

    X: np.ndarray
    S: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    weights: Optional[np.ndarray]
    columns: tuple

    @property
    def n(self) -> int:
        return self.S.shape[0]

    def to_dataset(self) -> Dataset:
        return Dataset(self.X, self.S, self.A, self.Y)


def parse_schema(text: str) -> dict:
    """Parse ``score=age,treatment=A,outcome=Y,covariates=age+x1,weight=w``."""
    schema: dict = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise SchemaError(f"schema entry {part!r} is not key=value")
        key, value = (t.strip() for t in part.split("=", 1))
        if key == "covariates":
            schema[key] = [v.strip() for v in value.split("+") if v.strip()]
        else:
            schema[key] = value
    return schema


def load_csv(path, schema: Mapping, delimiter: str = ",") -> ExternalTable:
    """Read an external table, mapping columns by name.

    ``schema`` maps ``score``, ``treatment`` and ``outcome`` (required) and
    optionally ``covariates`` (list; defaults to the score column) and
    ``weight`` to header names.
    """
    for key in ("score", "treatment", "outcome"):
        if key not in schema:
            raise SchemaError(f"schema is missing the {key!r} column")
    covs = list(schema.get("covariates") or [schema["score"]])
    weight_col = schema.get("weight")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        wanted = [schema["score"], schema["treatment"], schema["outcome"], *covs]
        if weight_col:
            wanted.append(weight_col)
        missing = [w for w in wanted if w not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        pos = {h: i for i, h in enumerate(header)}
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                vals = [float(row[pos[w]]) for w in wanted]
            except ValueError as exc:
                raise SchemaError(f"{path}: row {lineno}: {exc}") from None
            if not all(np.isfinite(vals)):
                raise SchemaError(f"{path}: row {lineno} has a non-finite value")
            if vals[1] not in (0.0, 1.0):
                raise SchemaError(f"{path}: row {lineno} treatment is not 0/1")
            if weight_col and vals[-1] < 0:
                raise SchemaError(f"{path}: row {lineno} has a negative weight")
            rows.append(vals)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    arr = np.asarray(rows)
    nc = len(covs)
    return ExternalTable(
        X=arr[:, 3:3 + nc],
        S=arr[:, 0],
        A=arr[:, 1].astype(np.int8),
        Y=arr[:, 2],
        weights=arr[:, -1] if weight_col else None,
        columns=tuple(wanted),
    )


def bootstrap(table: ExternalTable, m: int, seed: int) -> Dataset:
    """Draw ``m`` rows with replacement, proportionally to the sample weights."""
    if m < 1:
        raise ValueError("m must be positive")
    rng = np.random.default_rng(seed)
    if table.weights is None:
        idx = rng.integers(0, table.n, m)
    else:
        w = np.asarray(table.weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise SchemaError("weights must be nonnegative with a positive total")
        idx = rng.choice(table.n, size=m, replace=True, p=w / w.sum())
    return Dataset(table.X[idx], table.S[idx], table.A[idx], table.Y[idx])


def write_csv(data: Dataset, path, names: Sequence[str] | None = None, weights=None) -> None:
    """Write a dataset as a CSV readable by :func:`load_csv`."""
    names = list(names or [f"x{j}" for j in range(data.d)])
    header = ["score", "treatment", "outcome", *names] + (["weight"] if weights is not None else [])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(data.n):
            row = [repr(float(data.S[i])), int(data.A[i]), repr(float(data.Y[i]))]
            row += [repr(float(v)) for v in data.X[i]]
            if weights is not None:
                row.append(repr(float(weights[i])))
            w.writerow(row)
