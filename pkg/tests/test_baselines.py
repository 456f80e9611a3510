import numpy as np
import pytest

from orthoreg.baselines import (IpwWeights, ipw_msm_fit, msm_design, naive_fit, stabilized_weights,
                                weights_from_probabilities)
from orthoreg.data import PanelDataset
from orthoreg.dgp import DgpConfig, simulate
from orthoreg.errors import FamilyMismatchError
from orthoreg.oracle import GaussianScm, gaussian_naive_coeffs
from orthoreg.propensity import PropensitySpec, at_risk, fit_propensity_at, propensity_design

from conftest import make_panel


def test_weights_from_probabilities_by_hand():
    A = np.array([[1, 0], [0, 1.0]])
    pn = np.full((2, 2), 0.5)
    pd_ = np.array([[0.8, 0.4], [0.25, 0.5]])
    w = weights_from_probabilities(A, pn, pd_)
    assert np.allclose(w.per_time, [[0.5 / 0.8, 0.5 / 0.8 * 0.5 / 0.6], [0.5 / 0.75, 0.5 / 0.75 * 1.0]])
    assert np.allclose(w.values, w.per_time[:, -1])
    masked = weights_from_probabilities(A, pn, pd_, np.array([[True, False], [True, True]]))
    assert masked.values[0] == pytest.approx(0.5 / 0.8)


def test_weight_summaries_and_scaling():
    w = IpwWeights(np.array([1.0, 2.0, 3.0]), np.array([[1.0], [2.0], [3.0]]))
    assert w.mean == 2 and w.max == 3 and w.n_eff == pytest.approx(36 / 14)
    assert np.allclose(w.scaled(2).values, [2, 4, 6])
    assert w.truncated(50).max == pytest.approx(2.0)
    with pytest.raises(ValueError):
        IpwWeights(np.array([1.0, 0.0]), np.ones((2, 1)))


def test_randomized_treatment_gives_weights_near_one():
    w = stabilized_weights(make_panel(n=5000, T=3))
    assert abs(w.mean - 1) < 0.05
    assert w.max < 1.5


def test_propensity_design_columns():
    panel = make_panel(n=50, T=3, baseline=1)
    spec = PropensitySpec(denominator_treatment_lags=None, denominator_covariate_lags=1)
    assert propensity_design(panel, 2, spec, "denominator").column_names == (
        "intercept", "b1", "a_lag1", "a_lag2", "x_lag0", "x_lag1")
    assert propensity_design(panel, 2, spec, "numerator").column_names == ("intercept",)
    mono = PropensitySpec(monotone=True, numerator_treatment_lags=0, denominator_treatment_lags=0)
    assert "a_lag1" not in propensity_design(panel, 2, mono, "denominator").column_names


def test_propensity_spec_validation():
    with pytest.raises(ValueError):
        PropensitySpec(numerator_treatment_lags=2, denominator_treatment_lags=1)
    with pytest.raises(ValueError):
        PropensitySpec(features="cubic")


def test_monotone_propensity_sets_treated_to_one():
    panel = simulate(DgpConfig("hiv_like", 800, seed=1))
    spec = PropensitySpec(monotone=True, numerator_treatment_lags=0, denominator_treatment_lags=0)
    fp = fit_propensity_at(panel, 3, spec, "denominator")
    before = panel.treatments[:, 2] > 0
    assert np.all(fp.p1[before] == 1.0)
    assert not np.any(fp.fitted & before)


def test_at_risk_mask():
    panel = simulate(DgpConfig("cox_synthetic", 300, seed=2))
    assert at_risk(panel, 0).all()
    assert np.array_equal(at_risk(panel, 2), panel.y > 2.0)


def test_naive_gaussian_bias():
    scm = GaussianScm(0.6, 0.5, 0.5)
    panel = scm.simulate(200_000, np.random.default_rng(0))
    assert naive_fit(panel, "ols").theta[0] == pytest.approx(gaussian_naive_coeffs(scm)[0], abs=0.02)


def test_ipw_recovers_treatment_effects():
    cfg = DgpConfig("linear_nongaussian", 20000, seed=1, T=3,
                    params={"treatment_effect": [0.5, -0.3, 0.2], "treatment_slope": 0.5})
    panel = simulate(cfg)
    est = ipw_msm_fit(panel, stabilized_weights(panel))
    assert np.allclose(est.theta, [0.5, -0.3, 0.2], atol=0.1)
    cum = ipw_msm_fit(panel, stabilized_weights(panel), msm="cumulative")
    assert cum.names == ("cum_a",)


def test_ipw_weight_scale_invariance():
    panel = make_panel(n=400, T=2)
    w = stabilized_weights(panel)
    a = ipw_msm_fit(panel, w).theta
    b = ipw_msm_fit(panel, w.scaled(7.0)).theta
    assert np.allclose(a, b, atol=1e-10)


def test_ipw_cox_uses_period_weights():
    panel = simulate(DgpConfig("cox_synthetic", 600, seed=4))
    w = stabilized_weights(panel)
    est = ipw_msm_fit(panel, w, msm="current", y_family="cox")
    assert est.names == ("a",)
    flat = IpwWeights(w.values, np.repeat(w.values[:, None], panel.T, axis=1))
    assert not np.isclose(ipw_msm_fit(panel, flat, msm="current", y_family="cox").theta[0], est.theta[0])
    with pytest.raises(ValueError):
        ipw_msm_fit(panel, w, msm="full", y_family="cox")


def test_ipw_family_checks():
    panel = make_panel(n=100, kind="binary")
    with pytest.raises(FamilyMismatchError):
        ipw_msm_fit(panel, stabilized_weights(panel), y_family="probit")


def test_ipw_needs_binary_treatment():
    panel = GaussianScm(0.2, 0.2, 0.2).simulate(100, np.random.default_rng(0))
    with pytest.raises(FamilyMismatchError):
        stabilized_weights(panel)


def test_extreme_probabilities_warn():
    rng = np.random.default_rng(0)
    n = 400
    x = rng.standard_normal((n, 1)) * 20
    A = (x[:, 0] + rng.standard_normal(n) > 0).astype(float)[:, None]
    far = np.argmax(np.abs(x[:, 0]))
    A[far] = 1 - A[far]  # one subject treated against a near-certain propensity
    panel = PanelDataset(np.arange(n), [x], A, "continuous", rng.standard_normal(n))
    with pytest.warns(RuntimeWarning, match="below"):
        stabilized_weights(panel)


def test_msm_design_baseline():
    panel = make_panel(n=20, T=2, baseline=2)
    assert msm_design(panel, "full", baseline=True).column_names == ("intercept", "b1", "b2", "a_1", "a_2")
    with pytest.raises(ValueError):
        msm_design(panel, "quadratic")
