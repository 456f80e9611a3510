import importlib

import numpy as np
import pytest

from orthoreg.bootstrap import BootstrapResult, EstimatorConfig, basic_interval, bootstrap, estimate, with_interval
from orthoreg.data import PanelDataset
from orthoreg.errors import BootstrapError, ConfigError, SeparationError

from conftest import make_panel

# the package re-exports the function under the module's name
bs = importlib.import_module("orthoreg.bootstrap")


def test_basic_interval_formula():
    reps = np.linspace(0.4, 1.9, 21)
    reps[1], reps[19] = 0.5, 1.8  # the 5% and 95% quantiles for 21 sorted values
    lo, hi = basic_interval(np.array([1.0]), reps[:, None], 0.9)
    assert lo[0] == pytest.approx(0.2) and hi[0] == pytest.approx(1.5)


def test_degenerate_estimator_has_zero_spread():
    rng = np.random.default_rng(0)
    n = 60
    A = (rng.random((n, 2)) < 0.5).astype(float)
    X = [rng.standard_normal((n, 1)) for _ in range(2)]
    panel = PanelDataset(np.arange(n), X, A, "continuous", 1 + 0.5 * A[:, 0] + 0.25 * A[:, 1])
    res = bootstrap(EstimatorConfig(), panel, B=100, seed=1)
    assert np.all(res.se < 1e-10)
    lo, hi = res.basic_ci
    assert np.allclose(lo, res.point, atol=1e-9) and np.allclose(hi, res.point, atol=1e-9)
    assert np.all(np.isnan(BootstrapResult(("a",), np.ones(1), np.ones((3, 1)), 0.9).z_score))


def test_thread_count_does_not_change_results():
    panel = make_panel(n=150, T=2)
    with pytest.warns(RuntimeWarning):
        a = bootstrap(EstimatorConfig(), panel, B=30, seed=4)
    with pytest.warns(RuntimeWarning):
        b = bootstrap(EstimatorConfig(), panel, B=30, seed=4, threads=3)
    assert np.array_equal(a.replicates, b.replicates)


def test_resamples_whole_subjects(monkeypatch):
    panel = make_panel(n=40, T=3)
    seen = []
    real = bs.estimate

    def spy(cfg, p):
        seen.append(p)
        return real(cfg, p)

    monkeypatch.setattr(bs, "estimate", spy)
    bootstrap(EstimatorConfig(), panel, B=100, seed=2)
    original = {sid: i for i, sid in enumerate(panel.ids)}
    for p in seen[1:]:
        assert p.n == panel.n
        src = np.array([original[s.split("#")[0]] for s in p.ids])
        assert np.array_equal(p.treatments, panel.treatments[src])
        assert np.array_equal(p.covariates[2], panel.covariates[2][src])
        assert np.array_equal(p.y, panel.y[src])


def test_too_many_failures(monkeypatch):
    panel = make_panel(n=40)
    calls = []
    real = bs.estimate

    def flaky(cfg, p):
        calls.append(1)
        if len(calls) > 1 and len(calls) % 4 == 0:
            raise SeparationError("synthetic failure")
        return real(cfg, p)

    monkeypatch.setattr(bs, "estimate", flaky)
    with pytest.raises(BootstrapError, match="failed"):
        bootstrap(EstimatorConfig(), panel, B=100, seed=0)


def test_few_failures_are_dropped(monkeypatch):
    panel = make_panel(n=40)
    calls = []
    real = bs.estimate

    def flaky(cfg, p):
        calls.append(1)
        if len(calls) in (5, 9):
            raise SeparationError("synthetic failure")
        return real(cfg, p)

    monkeypatch.setattr(bs, "estimate", flaky)
    res = bootstrap(EstimatorConfig(), panel, B=100, seed=0)
    assert res.n_failed == 2 and res.B == 98


def test_small_B_warns_and_tiny_B_fails():
    panel = make_panel(n=40)
    with pytest.warns(RuntimeWarning, match="small"):
        bootstrap(EstimatorConfig(), panel, B=10)
    with pytest.raises(BootstrapError):
        bootstrap(EstimatorConfig(), panel, B=1)


def test_with_interval_attaches_se():
    panel = make_panel(n=100)
    est = estimate(EstimatorConfig(), panel)
    res = bootstrap(EstimatorConfig(), panel, B=100, seed=3)
    out = with_interval(est, res)
    assert np.array_equal(out.se, res.se)
    assert np.all(out.interval[0] <= out.theta) and np.all(out.theta <= out.interval[1])
    assert len(res.table()) == 2


def test_estimator_config_validation():
    with pytest.raises(ConfigError):
        EstimatorConfig(estimator="magic")
    with pytest.raises(ConfigError):
        EstimatorConfig.from_dict({"estimator": "ortho", "colour": "red"})
    cfg = EstimatorConfig.from_dict({"estimator": "ipw_msm", "propensity": {"features": "sign"}})
    assert cfg.propensity.features == "sign" and cfg.label == "ipw_msm"
