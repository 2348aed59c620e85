import csv
import json

import numpy as np
import pytest

from cspi.cli import main
from cspi.core import CutoffGrid, SplitSpec
from cspi.dgp import SyntheticSpec, generate, write_csv
from cspi.harness import (
    ExperimentPlan,
    SUMMARY_FIELDS,
    _Context,
    emit_outputs,
    fmt,
    parse_range,
    read_config,
    run_plan,
    worker_count,
)
from cspi.inference import CriticalValueSpec
from cspi.nuisance import NuisanceModelSpec
from cspi.pipeline import MethodConfig, run_method


def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_fmt_nine_significant_digits():
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(123456789.123) == "123456789"
    assert fmt(None) == "" and fmt(float("nan")) == ""
    assert fmt(True) == "1"


def test_parse_range():
    assert parse_range("-2:2:5") == (-2.0, -1.0, 0.0, 1.0, 2.0)
    assert parse_range("0.01,0.05") == (0.01, 0.05)


def test_plan_validation():
    with pytest.raises(ValueError):
        ExperimentPlan()
    with pytest.raises(ValueError):
        ExperimentPlan(dgp="DGP1", gammas=(0.1, 0.05))
    with pytest.raises(ValueError):
        ExperimentPlan(dgp="DGP1", gammas=(0.6,))
    with pytest.raises(ValueError):
        ExperimentPlan(dgp="DGP1", replications=0)
    with pytest.raises(ValueError):
        ExperimentPlan(dgp="DGP1", methods=("X",))


def test_single_replication_rates_are_binary():
    plan = ExperimentPlan(dgp="DGP1", methods=("CSPI",), gammas=(0.1,), replications=1, n_sim=2000)
    rows, records = run_plan(plan, workers=1)
    assert len(rows) == 1 and len(records) == 1
    assert rows[0].pass_rate in (0.0, 1.0) and rows[0].error_rate in (0.0, 1.0)


def test_accounting_and_pairing():
    plan = ExperimentPlan(dgp="DGP3", methods=("CSPI", "NAIVE", "HCPI-ttest"), gammas=(0.05, 0.2),
                          replications=20, n_sim=2000, seed=3)
    rows, records = run_plan(plan, workers=1)
    assert len(rows) == 6
    for row in rows:
        recs = [r for r in records if r.method == row.method and r.gamma == row.gamma]
        assert row.pass_rate * row.replications == pytest.approx(sum(r.changed for r in recs))
        assert all(r.changed for r in recs if r.error)
        assert 0 <= row.error_rate <= 1 and row.pass_rate_se >= 0
        gains = [r.true_tau for r in recs]
        assert row.expected_improvement == pytest.approx(np.mean(gains))
        assert row.calibration_error == pytest.approx(abs(row.error_rate - row.gamma))
    ctx = _Context(plan)
    a, b = ctx.config(0, 1, 4), ctx.config(2, 1, 4)
    assert a.split == b.split
    assert a.critical.seed != b.critical.seed
    np.testing.assert_array_equal(ctx.data(1, 4).Y, ctx.data(1, 4).Y)


def test_calibration_suppressed_when_no_worse_policy():
    plan = ExperimentPlan(dgp="DGP1", methods=("CSPI",), gammas=(0.1,), replications=2, n_sim=1000)
    rows, _ = run_plan(plan, workers=1)
    assert rows[0].calibration_error is None


def test_emit_empty(tmp_path):
    plan = ExperimentPlan(dgp="DGP1", methods=("CSPI",), gammas=(0.1,), replications=1)
    emit_outputs([], [], tmp_path, plan)
    assert _read(tmp_path / "summary.csv") == [SUMMARY_FIELDS]
    assert len(_read(tmp_path / "records.csv")) == 1
    for name in ("pass_rate", "expected_improvement", "error_rate"):
        assert _read(tmp_path / "plotdata" / f"{name}.csv") == [["gamma", "method", "value", "stderr"]]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["plan"]["dgp"] == "DGP1"


def test_emit_cardinality(tmp_path):
    plan = ExperimentPlan(dgp="DGP2", methods=("CSPI", "HCPI-ttest"), gammas=(0.05, 0.1, 0.2),
                          replications=3, n_sim=1000)
    rows, records = run_plan(plan, workers=1)
    emit_outputs(rows, records, tmp_path, plan)
    summary = _read(tmp_path / "summary.csv")
    assert len(summary) == 7
    assert len(_read(tmp_path / "records.csv")) == 1 + 18
    assert len(_read(tmp_path / "plotdata" / "pass_rate.csv")) == 7
    # relative improvement is blank for HCPI-ttest rows only if its EI is 0
    rel = SUMMARY_FIELDS.index("relative_improvement")
    for row in summary[1:]:
        if row[0] == "HCPI-ttest" and row[SUMMARY_FIELDS.index("expected_improvement")] not in ("", "0"):
            assert row[rel] == "1"


def test_cli_simulate_and_replay(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    code = main(["simulate", "--dgp", "DGP2", "--n", "800", "--gammas", "0.05,0.2", "--reps", "4",
                 "--methods", "CSPI,CSPI-MT", "--seed", "9", "--n-sim", "2000", "--out", str(out1)])
    assert code == 0
    assert main(["simulate", "--config", str(out1 / "manifest.json"), "--out", str(out2)]) == 0
    assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()


def test_cli_key_value_config(tmp_path):
    cfg = tmp_path / "plan.txt"
    cfg.write_text("# smoke plan\ndgp = DGP3\nn = 600\ngammas = 0.1\nreplications = 2\n"
                   "methods = NAIVE\nn_sim = 1000\n", encoding="utf-8")
    mapping = read_config(cfg)
    assert mapping["dgp"] == "DGP3"
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert len(_read(tmp_path / "o" / "summary.csv")) == 2


def test_cli_oracle(capsys):
    assert main(["oracle", "--dgp", "DGP1", "--grid", "-2:2:41"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["cutoff", "tau"] and len(rows) == 42
    table = {float(c): float(t) for c, t in rows[1:]}
    assert table[0.0] == pytest.approx(0.5)


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["oracle", "--dgp", "DGP1", "--nope"])
    assert exc.value.code == 2


def test_cli_runtime_error_exit_code(tmp_path, capsys):
    code = main(["analyze", "--input", str(tmp_path / "missing.csv"), "--schema", "score=s,treatment=a,outcome=y",
                 "--baseline-cutoff", "0", "--grid", "0,1"])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_cli_simulate_naive_dgp3(tmp_path):
    assert main(["simulate", "--dgp", "DGP3", "--methods", "NAIVE", "--reps", "50", "--n", "2000",
                 "--gammas", "0.05", "--out", str(tmp_path)]) == 0
    summary = _read(tmp_path / "summary.csv")
    err = float(summary[1][SUMMARY_FIELDS.index("error_rate")])
    assert err > 0.6


def test_cli_analyze_zero_outcomes(tmp_path, capsys):
    data = generate(SyntheticSpec("DGP1", 500, 0)).with_outcomes(np.zeros(500))
    path = tmp_path / "zero.csv"
    write_csv(data, path, names=["S", "X1", "X2"])
    code = main(["analyze", "--input", str(path), "--schema", "score=score,treatment=treatment,outcome=outcome,covariates=S+X1+X2",
                 "--baseline-cutoff", "2", "--grid", "-2:2:41", "--gamma", "0.05", "--method", "CSPI"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["final_cutoff"] == 2.0 and report["changed"] is False


@pytest.mark.parametrize("method", ["CSPI", "CSPI-MT", "HCPI-ttest"])
def test_analyze_matches_in_memory_run(tmp_path, capsys, method):
    data = generate(SyntheticSpec("DGP2", 3000, 21))
    data = data.with_outcomes((data.Y > 0).astype(float))
    path = tmp_path / "dgp2.csv"
    write_csv(data, path, names=["S", "X1", "X2"])
    argv = ["analyze", "--input", str(path),
            "--schema", "score=score,treatment=treatment,outcome=outcome,covariates=S+X1+X2",
            "--baseline-cutoff", "-2", "--grid", "-2:2:41", "--gamma", "0.2", "--method", method,
            "--seed", "17", "--n-sim", "5000"]
    assert main(argv) == 0
    report = json.loads(capsys.readouterr().out)
    cfg = MethodConfig(method=method, gamma=0.2, grid=CutoffGrid(parse_range("-2:2:41"), -2.0),
                       split=SplitSpec(0.2, 17, 5), nuisance=NuisanceModelSpec(outcome="ols"),
                       critical=CriticalValueSpec(5000, 17))
    res = run_method(data, cfg)
    assert report["final_cutoff"] == res.final_cutoff
    assert report["changed"] == res.changed
    np.testing.assert_allclose(report["lower_bounds"], res.decision.lower_bounds, rtol=1e-12)


def test_external_plan(tmp_path):
    data = generate(SyntheticSpec("DGP2", 2000, 2))
    path = tmp_path / "ext.csv"
    write_csv(data, path, names=["S", "X1", "X2"], weights=np.ones(data.n))
    plan = ExperimentPlan(input=str(path), schema="score=score,treatment=treatment,outcome=outcome,covariates=S+X1+X2,weight=weight",
                          baseline=-2.0, n=1000, methods=("CSPI", "HCPI-ttest"), gammas=(0.1,), replications=3,
                          n_sim=1000)
    rows, records = run_plan(plan, workers=1)
    assert len(records) == 6
    assert all(r.error_rate is None for r in rows)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("CSPI_THREADS", "1")
    assert worker_count() == 1


def test_process_pool_matches_serial():
    plan = ExperimentPlan(dgp="DGP1", methods=("CSPI", "HCPI-ttest"), gammas=(0.1,), replications=6, n_sim=1000)
    serial, rec_s = run_plan(plan, workers=1)
    pooled, rec_p = run_plan(plan, workers=2)
    assert [r.final_cutoff for r in rec_s] == [r.final_cutoff for r in rec_p]
    assert serial == pooled
