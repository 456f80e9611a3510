from importlib import resources

import numpy as np
import pandas as pd
import pytest
import yaml

from orthoreg.errors import ConfigError
from orthoreg.experiments import ExperimentConfig, max_abs_table, run_experiment, summarize, variance_ratio_table

BUNDLED = ["fig1", "fig2a", "fig2b", "fig3", "fig4", "hiv"]


def bundled(name) -> dict:
    return yaml.safe_load(resources.files("orthoreg.configs").joinpath(f"{name}.yaml").read_text())


def small_fig3(**over):
    d = bundled("fig3")
    d["replications"] = 3
    d["dgp"]["n"] = 300
    d.update(over)
    return ExperimentConfig.from_dict(d)


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_load(name):
    cfg = ExperimentConfig.from_dict(bundled(name))
    assert cfg.name == name and cfg.figure == name
    assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_config_validation():
    d = bundled("fig3")
    with pytest.raises(ConfigError, match="replications"):
        ExperimentConfig.from_dict({**d, "replications": 0})
    with pytest.raises(ConfigError, match="version"):
        ExperimentConfig.from_dict({**d, "version": 2})
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({**d, "colour": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**d, "grid": {"no_such_param": [1]}})
    with pytest.raises(ConfigError, match="ratio"):
        ExperimentConfig.from_dict({**d, "ratio": ["ortho", "ipw"]})
    with pytest.raises(ConfigError, match="unique"):
        ExperimentConfig.from_dict({**d, "estimators": [d["estimators"][0]] * 2})


def test_tables_one_row_per_cell_and_estimator():
    res = run_experiment(small_fig3())
    assert len(res.replications) == 4 * 2 * 3 * 2  # cells x estimators x replications x coefficients
    cum = res.summary[res.summary.coefficient == "cum_a"]
    assert len(cum) == 4 * 2
    assert set(cum.columns) >= {"effect_ax", "estimator", "mean", "sd", "mc_se", "z"}
    assert res.failures.empty


def test_written_tables_are_deterministic(tmp_path):
    cfg = small_fig3()
    a = run_experiment(cfg).write(tmp_path / "a")
    b = run_experiment(cfg, threads=3).write(tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.name == pb.name
        assert pa.read_bytes() == pb.read_bytes()
    assert (tmp_path / "a" / "fig3_fig3_plot.csv").exists()


def test_failures_are_recorded_and_run_continues():
    d = bundled("fig3")
    d["replications"] = 2
    d["dgp"]["n"] = 200
    d["estimators"] = d["estimators"] + [{"name": "bad", "estimator": "ipw_msm", "family": "cox", "msm": "full"}]
    res = run_experiment(ExperimentConfig.from_dict(d))
    assert len(res.failures) == 4 * 2
    assert set(res.replications.estimator) == {"ortho", "naive"}


def test_bootstrap_columns():
    d = bundled("fig3")
    d.update(replications=1, grid={"effect_ax": [0.0]}, bootstrap={"B": 100, "level": 0.9})
    d["dgp"]["n"] = 200
    res = run_experiment(ExperimentConfig.from_dict(d))
    assert {"se", "z", "lower", "upper", "B"} <= set(res.replications.columns)


def test_fig2a_ortho_flat_naive_growing():
    d = bundled("fig2a")
    d["replications"] = 4
    res = run_experiment(ExperimentConfig.from_dict(d))
    t = res.tables["max_abs"]
    ortho = t[t.estimator == "ortho"]["max_abs"].to_numpy()
    naive = t[t.estimator == "naive"]["max_abs"].to_numpy()
    assert np.all(ortho < 0.03)
    assert np.sum(np.diff(naive) < 0) <= 1


def test_summary_helpers():
    reps = pd.DataFrame({"cell": [0] * 8, "estimator": ["x"] * 4 + ["y"] * 4, "replication": [0, 0, 1, 1] * 2,
                         "coefficient": ["a_1", "a_2"] * 4, "estimate": [1.0, -3, 3, 1, 0, 0, 2, 2]})
    s = summarize(reps, ["cell"])
    row = s[(s.estimator == "x") & (s.coefficient == "a_1")].iloc[0]
    assert row["mean"] == 2 and row["sd"] == pytest.approx(np.sqrt(2))
    m = max_abs_table(reps, ["cell"])
    assert m[m.estimator == "x"]["max_abs"].iloc[0] == pytest.approx(3.0)
    v = variance_ratio_table(reps, ["cell"], "x", "y")
    assert v["ratio"].iloc[0] == pytest.approx((2 + 8) / (2 + 2))
