"""Replicated gamma-sweep experiments and result emission."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import CutoffGrid, SplitSpec, derive_seed
from .dgp import (
    DEFAULT_BASELINE,
    DGP2_THRESHOLDS,
    SyntheticSpec,
    TrueValueOracle,
    bootstrap,
    generate,
    load_csv,
    parse_schema,
)
from .inference import CriticalValueSpec
from .nuisance import NuisanceModelSpec
from .pipeline import METHODS, MethodConfig, _fit_estimate, run_method

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
_DATA_KEY = 0


def fmt(x) -> str:
    """Nine significant digits; empty string for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".9g")


def parse_range(text: str) -> tuple:
    """``lo:hi:num`` (inclusive, evenly spaced) or a comma-separated list."""
    text = str(text).strip()
    if ":" in text:
        lo, hi, num = text.split(":")
        return tuple(float(v) for v in np.linspace(float(lo), float(hi), int(num)))
    return tuple(float(v) for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class ExperimentPlan:
    """A gamma sweep over methods on a synthetic design or an external CSV.

    Either ``dgp`` or ``input`` must be given. ``basis`` is ``"auto"``
    (score indicators for DGP2, raw covariates otherwise), ``"raw"`` or
    ``"indicators"``.
    """

    dgp: Optional[str] = None
    input: Optional[str] = None
    schema: Optional[str] = None
    delimiter: str = ","
    n: int = 2000
    methods: tuple = ("CSPI", "CSPI-MT", "HCPI-finite", "HCPI-ttest")
    gammas: tuple = tuple(np.round(np.linspace(0.01, 0.2, 10), 12))
    replications: int = 500
    seed: int = 0
    grid: tuple = tuple(np.linspace(-2.0, 2.0, 41))
    baseline: Optional[float] = None
    zeta: float = 0.2
    k_folds: int = 5
    n_sim: int = 10_000
    outcome_model: str = "ols"
    basis: str = "auto"
    hcpi_range_bound: float = 66.0
    hcpi_inflation: float = 2.0
    truth_size: Optional[int] = None

    def __post_init__(self):
        if (self.dgp is None) == (self.input is None):
            raise ValueError("exactly one of dgp or input must be set")
        if self.dgp is not None:
            object.__setattr__(self, "dgp", self.dgp.upper())
        methods = tuple(self.methods)
        for m in methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        object.__setattr__(self, "methods", methods)
        gammas = tuple(float(g) for g in self.gammas)
        if not gammas or any(not 0 < g <= 0.5 for g in gammas) or any(b <= a for a, b in zip(gammas, gammas[1:])):
            raise ValueError("gammas must be strictly increasing values in (0, 0.5]")
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "grid", tuple(float(c) for c in self.grid))
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.basis not in ("auto", "raw", "indicators"):
            raise ValueError("basis must be auto, raw or indicators")
        if self.input is not None and self.schema is None:
            raise ValueError("an input file requires a schema")
        if self.input is not None and self.baseline is None:
            raise ValueError("an input file requires a baseline cutoff")

    @property
    def resolved_baseline(self) -> float:
        if self.baseline is not None:
            return float(self.baseline)
        return DEFAULT_BASELINE[self.dgp]

    def cutoff_grid(self) -> CutoffGrid:
        return CutoffGrid(self.grid, self.resolved_baseline)

    def nuisance_spec(self) -> NuisanceModelSpec:
        use_ind = self.basis == "indicators" or (self.basis == "auto" and self.dgp == "DGP2")
        return NuisanceModelSpec(
            outcome=self.outcome_model,
            propensity="sample-mean",
            thresholds=DGP2_THRESHOLDS if use_ind else (),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentPlan":
        """Build a plan from a flat mapping whose values may be strings."""
        names = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            key = key.replace("-", "_")
            if key not in names:
                raise ValueError(f"unknown plan key {key!r}")
            kwargs[key] = _coerce(key, value)
        return cls(**kwargs)


_INT_KEYS = {"n", "replications", "seed", "k_folds", "n_sim", "truth_size"}
_FLOAT_KEYS = {"baseline", "zeta", "hcpi_range_bound", "hcpi_inflation"}


def _coerce(key, value):
    if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none", "null")):
        return None
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in ("gammas", "grid"):
        return parse_range(value) if isinstance(value, str) else tuple(float(v) for v in value)
    if key == "methods":
        return tuple(v.strip() for v in value.split(",")) if isinstance(value, str) else tuple(value)
    return value


def read_config(path) -> dict:
    """Read a JSON document (a manifest or a flat object) or ``key = value`` lines."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return doc.get("plan", doc)
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentRecord:
    method: str
    gamma: float
    replication: int
    final_cutoff: float
    changed: bool
    true_tau: Optional[float]
    error: bool
    wall_time: float
    failure: str = ""


@dataclass(frozen=True)
class SummaryRow:
    method: str
    gamma: float
    replications: int
    excluded: int
    pass_rate: float
    pass_rate_se: float
    error_rate: Optional[float]
    error_rate_se: Optional[float]
    expected_improvement: Optional[float]
    expected_improvement_se: Optional[float]
    calibration_error: Optional[float]
    relative_improvement: Optional[float] = None


SUMMARY_FIELDS = [f.name for f in dataclasses.fields(SummaryRow)]
RECORD_FIELDS = [f.name for f in dataclasses.fields(ExperimentRecord)]


class _Context:
    """Per-plan state shared by replications: grid, truth lookup, external table."""

    def __init__(self, plan: ExperimentPlan):
        self.plan = plan
        self.grid = plan.cutoff_grid()
        self.nuisance = plan.nuisance_spec()
        self.table = None
        if plan.dgp is not None:
            oracle = TrueValueOracle(plan.dgp, self.grid.baseline)
            self.truth = dict(zip(self.grid.cutoffs, np.atleast_1d(oracle(self.grid.values)).tolist()))
        else:
            self.table = load_csv(plan.input, parse_schema(plan.schema), plan.delimiter)
            self.truth = self._external_truth()
        self.truth[self.grid.baseline] = 0.0

    def _external_truth(self) -> dict:
        plan = self.plan
        m = plan.truth_size or self.table.n
        big = bootstrap(self.table, m, derive_seed(plan.seed, 99))
        spec = self.nuisance.with_constant_propensity(float(np.clip(big.A.mean(), 0.01, 0.99)))
        est = _fit_estimate(big, self.grid.values, self.grid.baseline, spec, plan.k_folds, derive_seed(plan.seed, 98))
        return dict(zip(self.grid.cutoffs, est.tau_hat.tolist()))

    def worse_possible(self) -> bool:
        return any(v < 0 for v in self.truth.values())

    def data(self, gi: int, rep: int):
        seed = derive_seed(self.plan.seed, _DATA_KEY, gi, rep)
        if self.table is not None:
            return bootstrap(self.table, self.plan.n, seed)
        return generate(SyntheticSpec(self.plan.dgp, self.plan.n, seed))

    def config(self, mi: int, gi: int, rep: int) -> MethodConfig:
        plan = self.plan
        return MethodConfig(
            method=plan.methods[mi],
            gamma=plan.gammas[gi],
            grid=self.grid,
            split=SplitSpec(plan.zeta, derive_seed(plan.seed, _DATA_KEY, gi, rep, 1), plan.k_folds),
            nuisance=self.nuisance,
            critical=CriticalValueSpec(plan.n_sim, derive_seed(plan.seed, 1 + mi, gi, rep)),
            hcpi_range_bound=plan.hcpi_range_bound,
            hcpi_inflation=plan.hcpi_inflation,
        )


_WORKER_CTX: Optional[_Context] = None


def _init_worker(plan: ExperimentPlan):
    global _WORKER_CTX
    _WORKER_CTX = _Context(plan)


def _run_cell(ctx: _Context, gi: int, rep: int) -> list:
    """All methods on one replication's dataset (paired comparison)."""
    data = ctx.data(gi, rep)
    out = []
    for mi, method in enumerate(ctx.plan.methods):
        gamma = ctx.plan.gammas[gi]
        t0 = time.perf_counter()
        try:
            res = run_method(data, ctx.config(mi, gi, rep))
        except Exception as exc:  # recorded and excluded from aggregates
            out.append(ExperimentRecord(method, gamma, rep, math.nan, False, None, False,
                                        time.perf_counter() - t0, f"{type(exc).__name__}: {exc}"))
            continue
        tau = ctx.truth.get(res.final_cutoff)
        out.append(ExperimentRecord(
            method, gamma, rep, res.final_cutoff, res.changed, tau,
            bool(res.changed and tau is not None and tau < 0), time.perf_counter() - t0,
        ))
    return out


def _run_cell_worker(args):
    return _run_cell(_WORKER_CTX, *args)


def worker_count() -> int:
    env = os.environ.get("CSPI_THREADS")
    n = os.cpu_count() or 1
    if env:
        n = min(n, max(1, int(env)))
    return n


def _se_prop(p: float, m: int) -> float:
    return math.sqrt(p * (1 - p) / m) if m > 0 else math.nan


def summarize(plan: ExperimentPlan, records: Sequence[ExperimentRecord], worse_possible: bool = True,
              external: bool = False) -> list:
    """Aggregate records into one row per (method, gamma)."""
    rows = []
    for gamma in plan.gammas:
        for method in plan.methods:
            recs = [r for r in records if r.method == method and r.gamma == gamma]
            ok = [r for r in recs if not r.failure]
            m = len(ok)
            changed = np.array([r.changed for r in ok], dtype=float)
            p = float(changed.mean()) if m else math.nan
            err = ei = err_se = ei_se = cal = None
            if not external and m:
                errs = np.array([r.error for r in ok], dtype=float)
                gains = np.array([r.true_tau if r.true_tau is not None else 0.0 for r in ok])
                err = float(errs.mean())
                err_se = _se_prop(err, m)
                ei = float(gains.mean())
                ei_se = float(gains.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
                cal = abs(err - gamma) if worse_possible else None
            rows.append(SummaryRow(method, gamma, m, len(recs) - m, p, _se_prop(p, m),
                                   err, err_se, ei, ei_se, cal))
    ref = {r.gamma: r.expected_improvement for r in rows if r.method == "HCPI-ttest"}
    out = []
    for r in rows:
        base = ref.get(r.gamma)
        rel = r.expected_improvement / base if (base and r.expected_improvement is not None) else None
        out.append(dataclasses.replace(r, relative_improvement=rel))
    return out


def run_plan(plan: ExperimentPlan, workers: Optional[int] = None) -> tuple[list, list]:
    """Run every (gamma, replication) cell and return ``(summary_rows, records)``."""
    ctx = _Context(plan)
    cells = [(gi, rep) for gi in range(len(plan.gammas)) for rep in range(plan.replications)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(plan,)) as pool:
            chunks = list(pool.map(_run_cell_worker, cells, chunksize=max(1, len(cells) // (8 * workers))))
    else:
        chunks = [_run_cell(ctx, gi, rep) for gi, rep in cells]
    records = [r for chunk in chunks for r in chunk]
    order = {m: i for i, m in enumerate(plan.methods)}
    records.sort(key=lambda r: (order[r.method], r.gamma, r.replication))
    failed = sum(1 for r in records if r.failure)
    if failed:
        logger.warning("%d replication(s) failed and were excluded", failed)
    rows = summarize(plan, records, ctx.worse_possible(), external=plan.input is not None)
    return rows, records


def _write_rows(path: Path, header: list, rows: list):
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_outputs(rows: Sequence[SummaryRow], records: Sequence[ExperimentRecord], out_dir,
                 plan: Optional[ExperimentPlan] = None) -> Path:
    """Write summary.csv, records.csv, plotdata/*.csv and manifest.json into ``out_dir``."""
    out = Path(out_dir)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    _write_rows(out / "summary.csv", SUMMARY_FIELDS,
                [[r.method, *(fmt(getattr(r, f)) for f in SUMMARY_FIELDS[1:])] for r in rows])
    _write_rows(out / "records.csv", RECORD_FIELDS,
                [[r.method, *(fmt(getattr(r, f)) for f in RECORD_FIELDS[1:-1]), r.failure] for r in records])
    series = {
        "pass_rate": ("pass_rate", "pass_rate_se"),
        "expected_improvement": ("expected_improvement", "expected_improvement_se"),
        "error_rate": ("error_rate", "error_rate_se"),
    }
    for name, (val, se) in series.items():
        _write_rows(out / "plotdata" / f"{name}.csv", ["gamma", "method", "value", "stderr"],
                    [[fmt(r.gamma), r.method, fmt(getattr(r, val)), fmt(getattr(r, se))] for r in rows])
    manifest = {
        "version": MANIFEST_VERSION,
        "plan": plan.to_dict() if plan is not None else None,
        "seed_scheme": {
            "data": "derive_seed(seed, 0, gamma_index, replication)",
            "split": "derive_seed(seed, 0, gamma_index, replication, 1)",
            "critical": "derive_seed(seed, 1 + method_index, gamma_index, replication)",
        },
        "n_records": len(records),
    }
    try:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {out / 'manifest.json'}: {exc}") from exc
    return out


def benchmark_plans(replications: int = 500, seed: int = 0, n: int = 2000, n_sim: int = 10_000) -> dict:
    """Plans reproducing the pass-rate, improvement and error-rate sweeps."""
    g10 = tuple(np.round(np.linspace(0.01, 0.2, 10), 12))
    g20 = tuple(np.round(np.linspace(0.01, 0.2, 20), 12))
    common = dict(replications=replications, seed=seed, n=n, n_sim=n_sim)
    return {
        "DGP1": ExperimentPlan(dgp="DGP1", gammas=g10, **common),
        "DGP2": ExperimentPlan(dgp="DGP2", gammas=g10, **common),
        "DGP3": ExperimentPlan(dgp="DGP3", gammas=g20, methods=METHODS, **common),
    }
