import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from cspi.core import k_fold_indices
from cspi.dgp import SyntheticSpec, generate
from cspi.estimator import PolicyDiffEstimate, estimate_policy_diffs
from cspi.inference import CriticalValueSpec
from cspi.nuisance import NuisanceModelSpec, fit_cross_fitted
from cspi.selection import passing_probability, select_multi, select_single


def ncdf(x):
    return float(mpmath.ncdf(x))


def z95():
    return float(mpmath.sqrt(2) * mpmath.erfinv(mpmath.mpf(0.9)))


def _est(tau, sigma, cutoffs=None, baseline=10.0):
    tau = np.asarray(tau, dtype=float)
    cutoffs = np.arange(tau.size, dtype=float) if cutoffs is None else np.asarray(cutoffs, dtype=float)
    return PolicyDiffEstimate(cutoffs, baseline, tau, np.asarray(sigma, dtype=float), 100)


def test_passing_probability_centered():
    for g in (0.01, 0.05, 0.2):
        assert passing_probability(0.0, 3.0, 50, g) == pytest.approx(g, abs=1e-12)


def test_passing_probability_at_threshold():
    tau = math.sqrt(4.0 / 400) * z95()
    assert passing_probability(tau, 4.0, 400, 0.05) == pytest.approx(0.5, abs=1e-12)


def test_passing_probability_hand_value():
    expected = ncdf(0.3 * 10 - z95())
    assert passing_probability(0.3, 4.0, 400, 0.05) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.912, abs=1e-3)


def test_passing_probability_parameterised_form():
    # 1 - CDF of N(tau, s^2) at s * z equals the simplified expression
    rng = np.random.default_rng(0)
    for _ in range(20):
        tau, s2, n = rng.normal(), rng.uniform(0.1, 10), int(rng.integers(1, 1000))
        s = math.sqrt(s2 / n)
        direct = 1 - ncdf((s * z95() - tau) / s)
        assert passing_probability(tau, s2, n, 0.05) == pytest.approx(direct, abs=1e-12)


def test_passing_probability_zero_variance():
    assert passing_probability(0.2, 0.0, 10, 0.05) == 1.0
    assert passing_probability(0.0, 0.0, 10, 0.05) == 0.0
    assert passing_probability(-0.1, 0.0, 10, 0.05) == 0.0


def test_select_single_two_cutoffs():
    res = select_single(_est([0.3, 0.6], np.diag([4.0, 400.0])), 0.05, 400)
    obj = [ncdf(3 - z95()) * 0.3, ncdf(0.6 - z95()) * 0.6]
    np.testing.assert_allclose(res.objective, obj, atol=1e-12)
    assert obj[0] == pytest.approx(0.274, abs=1e-3) and obj[1] == pytest.approx(0.089, abs=1e-3)
    assert res.chosen.tolist() == [0.0]


def test_select_single_nonpositive_and_baseline_only():
    res = select_single(_est([-0.2, -0.1, -0.3], np.eye(3)), 0.05, 100)
    assert res.chosen.size == 1
    res = select_single(_est([0.0], np.zeros((1, 1)), cutoffs=[2.0], baseline=2.0), 0.05, 100)
    assert res.chosen.tolist() == [2.0]
    assert res.objective[0] == 0.0


def test_select_single_tie_break():
    # identical objectives: closest to the baseline wins, then the smaller cutoff
    est = _est([0.2, 0.2, 0.2], np.eye(3), cutoffs=[-1.0, 0.0, 1.0], baseline=0.5)
    assert select_single(est, 0.05, 100).chosen.tolist() == [0.0]
    est = _est([0.2, 0.2], np.eye(2), cutoffs=[0.0, 1.0], baseline=0.5)
    assert select_single(est, 0.05, 100).chosen.tolist() == [0.0]


def test_select_multi_single_point():
    res = select_multi(_est([0.4], [[1.0]]), 0.05, 100, CriticalValueSpec(2000, 0))
    assert res.chosen.tolist() == [0.0]
    assert res.anchor == 0.0


def test_select_multi_perfect_correlation_accepts_all():
    est = _est([0.5, 0.5, 0.5, 0.5], np.full((4, 4), 4.0), cutoffs=[0.0, 1.0, 2.0, 3.0], baseline=-1.0)
    res = select_multi(est, 0.05, 400, CriticalValueSpec(20_000, 0))
    assert res.anchor == 0.0
    assert res.chosen.tolist() == [0.0, 1.0, 2.0, 3.0]
    np.testing.assert_allclose(res.eta[1:], 1.0)


def test_select_multi_rejects_under_joint_critical_value():
    n_test = 400
    zs = z95()
    z_joint = brentq(lambda z: (q := 0.5 * math.erfc(z / math.sqrt(2))) * (2 - q) - 0.05, 0, 10)
    sd_c = 1.0 / (1.7 / math.sqrt(n_test))  # candidate t-stat 1.7: passes alone, not jointly
    tau = np.array([0.5, 1.0])
    sigma = np.diag([1.0, sd_c**2])
    se_c = sd_c / math.sqrt(n_test)
    assert tau[1] - zs * se_c > 0
    assert tau[1] - z_joint * se_c < 0
    res = select_multi(_est(tau, sigma), 0.05, n_test, CriticalValueSpec(50_000, 1))
    assert res.anchor == 0.0
    assert res.chosen.tolist() == [0.0]
    (cut, eta, z, ok), = res.steps
    assert cut == 1.0 and eta == 0.0 and not ok
    assert abs(z - z_joint) <= 0.03


def test_select_multi_stops_at_first_rejection():
    # second candidate alone would be fine but the loop has already stopped
    tau = np.array([0.5, 0.6, 1.0, 0.7])
    s2 = math.sqrt(139.0)
    sigma = np.array([
        [1.0, 0.9, 0.5 * s2, 0.1],
        [0.9, 1.0, 0.45 * s2, 0.09],
        [0.5 * s2, 0.45 * s2, 139.0, 0.05 * s2],
        [0.1, 0.09, 0.05 * s2, 1.0],
    ])
    assert np.linalg.eigvalsh(sigma).min() > 0
    est = _est(tau, sigma, cutoffs=[0.0, 1.0, 2.0, 3.0], baseline=-1.0)
    res = select_multi(est, 0.05, 400, CriticalValueSpec(20_000, 0))
    assert res.anchor == 0.0
    assert [s[0] for s in res.steps] == [1.0, 2.0]  # descending correlation, stopped before 3.0
    assert [s[3] for s in res.steps] == [True, False]
    assert res.chosen.tolist() == [0.0, 1.0]


def test_select_multi_zero_variance_anchor():
    est = _est([0.1, 0.2], np.diag([0.0, 1.0]))
    res = select_multi(est, 0.05, 100, CriticalValueSpec(2000, 0))
    assert res.anchor == 0.0
    assert res.eta[1] == 0.0


@st.composite
def estimates(draw):
    l = draw(st.integers(1, 8))
    seed = draw(st.integers(0, 10_000))
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(l, l))
    sigma = B @ B.T + np.diag(rng.uniform(0.01, 1.0, l))
    tau = rng.normal(0.1, 0.1, l)
    return _est(tau, sigma, cutoffs=np.linspace(-1, 1, l), baseline=2.0)


@given(est=estimates(), gamma=st.sampled_from([0.01, 0.05, 0.2]))
@settings(max_examples=40, deadline=None)
def test_select_multi_invariants(est, gamma):
    n_test = 400
    res = select_multi(est, gamma, n_test, CriticalValueSpec(2000, 0))
    assert res.anchor in res.chosen
    assert np.all(np.isin(res.chosen, est.cutoffs))
    tau_anchor = est.tau_hat[est.cutoffs == res.anchor][0]
    chosen_tau = est.tau_hat[np.isin(est.cutoffs, res.chosen)]
    assert np.all(chosen_tau >= tau_anchor)
    assert np.all((res.pass_probs >= 0) & (res.pass_probs <= 1))
    # every accepted step had all tentative bounds positive
    accepted = [res.anchor]
    sd = np.sqrt(np.diag(est.sigma_hat))
    for cut, _, z, ok in res.steps:
        if ok:
            accepted.append(cut)
            idx = np.isin(est.cutoffs, accepted)
            assert np.all(est.tau_hat[idx] - z * sd[idx] / math.sqrt(n_test) > 0)
    # determinism
    again = select_multi(est, gamma, n_test, CriticalValueSpec(2000, 0))
    np.testing.assert_array_equal(res.chosen, again.chosen)


@pytest.mark.parametrize("scale", [0.1, 3.0, 250.0])
def test_scale_invariance(scale):
    data = generate(SyntheticSpec("DGP2", 800, 4))
    folds = k_fold_indices(data.n, 5, 0)
    spec = NuisanceModelSpec(outcome="ols", propensity="constant", propensity_value=0.5, thresholds=(-1.5, 1.5))
    grid = np.linspace(-2, 2, 41)
    est = estimate_policy_diffs(data, grid, -2.0, fit_cross_fitted(data, folds, spec))
    scaled_data = data.with_outcomes(scale * data.Y)
    scaled = estimate_policy_diffs(scaled_data, grid, -2.0, fit_cross_fitted(scaled_data, folds, spec))
    np.testing.assert_allclose(scaled.tau_hat, scale * est.tau_hat, rtol=1e-6, atol=1e-9 * scale)
    assert select_single(est, 0.05, 3200).chosen == select_single(scaled, 0.05, 3200).chosen
    spec_cv = CriticalValueSpec(5000, 0)
    np.testing.assert_array_equal(select_multi(est, 0.05, 3200, spec_cv).chosen,
                                  select_multi(scaled, 0.05, 3200, spec_cv).chosen)
