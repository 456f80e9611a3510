"""Replication grids over simulated studies and their summary tables.

An experiment config (YAML) looks like::

    version: 1
    name: fig3
    figure: fig3                 # selects the plot-data table
    seed: 2024
    replications: 50
    dgp: {kind: cox_synthetic, n: 1000}
    grid: {effect_ax: [0.0, 0.5, 1.0, 2.0]}
    estimators:
      - {name: ortho, estimator: ortho, family: cox, cumulative: true}
      - {name: naive, estimator: naive, family: cox, cumulative: true}
    bootstrap: {B: 200, level: 0.9}     # optional
    ratio: [ipw, ortho]                  # optional variance-ratio table

Every grid cell reuses the same replication streams (common random
numbers), so differences between cells are not blurred by independent
simulation noise.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .bootstrap import EstimatorConfig, bootstrap, estimate
from .dgp import DgpConfig, simulate
from .errors import ConfigError, OrthoregError

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
FIGURES = ("fig1", "fig2a", "fig2b", "fig3", "fig4", "hiv", "custom")
FLOAT_FORMAT = "%.10g"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dgp: DgpConfig
    estimators: tuple
    replications: int
    seed: int = 0
    grid: dict = field(default_factory=dict)
    figure: str = "custom"
    bootstrap: dict | None = None
    ratio: tuple | None = None

    def __post_init__(self):
        if int(self.replications) < 1:
            raise ConfigError("replications must be at least 1")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        labels = [e.label for e in self.estimators]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"estimator names must be unique, got {labels}")
        if self.figure not in FIGURES:
            raise ConfigError(f"figure must be one of {FIGURES}")
        for k, v in self.grid.items():
            if not isinstance(v, (list, tuple)) or not v:
                raise ConfigError(f"grid entry {k!r} needs a nonempty list of values")
        if self.ratio is not None and (len(self.ratio) != 2 or not set(self.ratio) <= set(labels)):
            raise ConfigError("ratio must name two configured estimators")
        if self.bootstrap is not None and set(self.bootstrap) - {"B", "level"}:
            raise ConfigError("bootstrap accepts only B and level")
        for cell in self.cells():
            self.dgp.with_params(**cell)  # rejects unknown or invalid grid values

    def cells(self) -> list[dict]:
        keys = list(self.grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))] or [{}]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version}")
        extra = set(d) - {"name", "dgp", "estimators", "replications", "seed", "grid", "figure",
                          "bootstrap", "ratio"}
        if extra:
            raise ConfigError(f"unknown experiment keys {sorted(extra)}")
        try:
            dgp = DgpConfig.from_dict({**d.pop("dgp"), "seed": d.get("seed", 0)})
            ests = tuple(EstimatorConfig.from_dict(e) for e in d.pop("estimators"))
            ratio = d.pop("ratio", None)
            return cls(dgp=dgp, estimators=ests, ratio=tuple(ratio) if ratio else None, **d)
        except KeyError as e:
            raise ConfigError(f"experiment config is missing {e.args[0]!r}") from None
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_dict(self) -> dict:
        out = {"version": CONFIG_VERSION, "name": self.name, "figure": self.figure, "seed": self.seed,
               "replications": self.replications, "dgp": self.dgp.to_dict(), "grid": self.grid,
               "estimators": [_estimator_dict(e) for e in self.estimators]}
        if self.bootstrap is not None:
            out["bootstrap"] = dict(self.bootstrap)
        if self.ratio is not None:
            out["ratio"] = list(self.ratio)
        return out


def _estimator_dict(e: EstimatorConfig) -> dict:
    d = {k: getattr(e, k) for k in ("name", "estimator", "family", "cumulative", "history", "x_family",
                                    "msm", "msm_baseline", "truncate")}
    d["propensity"] = dict(vars(e.propensity))
    return d


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    replications: pd.DataFrame
    summary: pd.DataFrame
    tables: dict
    failures: pd.DataFrame

    def plot_table(self) -> pd.DataFrame:
        key = {"fig2a": "max_abs", "fig2b": "variance_ratio"}.get(self.config.figure, "summary")
        return self.tables.get(key, self.summary)

    def write(self, output_dir) -> list[Path]:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []

        def save(df, fname):
            p = out / fname
            df.to_csv(p, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
            paths.append(p)

        stem = self.config.name
        save(self.replications, f"{stem}_replications.csv")
        save(self.summary, f"{stem}_summary.csv")
        for k, df in sorted(self.tables.items()):
            save(df, f"{stem}_{k}.csv")
        save(self.failures, f"{stem}_failures.csv")
        save(self.plot_table(), f"{stem}_{self.config.figure}_plot.csv")
        cfg_path = out / f"{stem}_config.yaml"
        cfg_path.write_text(yaml.safe_dump(self.config.to_dict(), sort_keys=True), encoding="utf-8")
        paths.append(cfg_path)
        return paths


def _run_task(cfg: ExperimentConfig, cell_idx: int, cell: dict, rep: int):
    dgp = DgpConfig(cfg.dgp.kind, cfg.dgp.n, cfg.seed, cfg.dgp.T, {**cfg.dgp.params, **cell}, rep)
    rows, fails = [], []
    try:
        panel = simulate(dgp)
    except (OrthoregError, ValueError) as e:
        return rows, [{"cell": cell_idx, **cell, "replication": rep, "estimator": "", "error": str(e)}]
    for est in cfg.estimators:
        base = {"cell": cell_idx, **cell, "replication": rep, "estimator": est.label}
        try:
            if cfg.bootstrap:
                boot = bootstrap(est, panel, B=cfg.bootstrap.get("B", 200), level=cfg.bootstrap.get("level", 0.9),
                                 seed=cfg.seed, stream=(est.label, rep))
                rows += [{**base, **r} for r in boot.table()]
            else:
                e = estimate(est, panel)
                rows += [{**base, "coefficient": nm, "estimate": float(v)} for nm, v in zip(e.names, e.theta)]
        except (OrthoregError, ValueError, np.linalg.LinAlgError) as e:
            fails.append({**base, "error": f"{type(e).__name__}: {e}"})
    return rows, fails


def summarize(reps: pd.DataFrame, keys: list[str]) -> pd.DataFrame:
    """Per cell, estimator and coefficient: mean, SD, MC SE, mean |estimate| and z = mean / SD."""
    g = reps.groupby(keys + ["estimator", "coefficient"], sort=True)["estimate"]
    s = g.agg(n="count", mean="mean", sd=lambda v: v.std(ddof=1) if len(v) > 1 else np.nan,
              mean_abs=lambda v: np.abs(v).mean()).reset_index()
    s["mc_se"] = s["sd"] / np.sqrt(s["n"])
    s["z"] = s["mean"] / s["sd"]
    return s


def max_abs_table(reps: pd.DataFrame, keys: list[str]) -> pd.DataFrame:
    """Per replication, the largest |treatment coefficient|; then averaged per cell."""
    per = (reps.assign(abs_est=reps["estimate"].abs())
           .groupby(keys + ["estimator", "replication"], sort=True)["abs_est"].max().reset_index())
    out = per.groupby(keys + ["estimator"], sort=True)["abs_est"].agg(["mean", "std", "count"]).reset_index()
    return out.rename(columns={"mean": "max_abs", "std": "max_abs_sd", "count": "n"})


def variance_ratio_table(reps: pd.DataFrame, keys: list[str], num: str, den: str) -> pd.DataFrame:
    """Replication variance of ``num`` over ``den``, summed over coefficients."""
    var = (reps.groupby(keys + ["estimator", "coefficient"], sort=True)["estimate"].var(ddof=1)
           .groupby(level=keys + ["estimator"]).sum().unstack("estimator"))
    out = pd.DataFrame({"var_" + num: var[num], "var_" + den: var[den], "ratio": var[num] / var[den]})
    return out.reset_index()


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Run every (cell, replication) task; failures are recorded and the run continues."""
    cells = cfg.cells()
    tasks = [(i, c, r) for i, c in enumerate(cells) for r in range(cfg.replications)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: _run_task(cfg, *t), tasks))
    else:
        results = [_run_task(cfg, *t) for t in tasks]
    keys = ["cell"] + list(cfg.grid)
    rows = [r for res in results for r in res[0]]
    fails = [f for res in results for f in res[1]]
    reps = pd.DataFrame(rows)
    if reps.empty:
        reps = pd.DataFrame(columns=keys + ["replication", "estimator", "coefficient", "estimate"])
    reps = reps.sort_values(keys + ["estimator", "replication", "coefficient"], kind="mergesort").reset_index(drop=True)
    failures = pd.DataFrame(fails, columns=keys + ["replication", "estimator", "error"])
    summary = summarize(reps, keys) if len(reps) else pd.DataFrame()
    tables = {}
    if len(reps):
        tables["max_abs"] = max_abs_table(reps, keys)
        if cfg.ratio:
            tables["variance_ratio"] = variance_ratio_table(reps, keys, *cfg.ratio)
    if fails:
        log.warning("%d estimator fits failed; see the failures table", len(fails))
    return ExperimentResult(cfg, reps, summary, tables, failures)
