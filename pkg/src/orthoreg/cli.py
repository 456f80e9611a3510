"""Command-line interface.

Examples
--------
::

    orthoreg --seed 7 --output-dir out simulate --kind cox_synthetic --n 1000
    orthoreg fit out/cox_synthetic.csv --estimator ortho --family cox
    orthoreg --seed 1 bootstrap out/cox_synthetic.csv --family cox --B 200
    orthoreg --threads 4 --output-dir results experiment fig3
    orthoreg check-positivity out/cox_synthetic.csv --epsilon 0.01

``experiment`` accepts a YAML path or the name of a bundled config
(``fig1``, ``fig2a``, ``fig2b``, ``fig3``, ``fig4``, ``hiv``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import pandas as pd
import yaml

from .bootstrap import EstimatorConfig, bootstrap, estimate
from .data import PanelSchema, check_positivity, load_panel_csv, write_panel_csv
from .dgp import DEFAULTS, DgpConfig, simulate
from .errors import OrthoregError
from .experiments import FLOAT_FORMAT, ExperimentConfig, run_experiment
from .propensity import PropensitySpec

log = logging.getLogger("orthoreg")

THREADS_ENV = "ORTHOREG_THREADS"
BUNDLED = ("fig1", "fig2a", "fig2b", "fig3", "fig4", "hiv")


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise OrthoregError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def _cumulative(value: str):
    table = {"false": False, "true": True, "covariates": "covariates", "history": "history"}
    try:
        return table[value.lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"choose from {sorted(table)}") from None


def _param(item: str):
    key, sep, value = item.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
    return key, yaml.safe_load(value)


def _add_estimator_flags(p):
    p.add_argument("panel", help="long-format panel CSV")
    p.add_argument("--schema", help="schema YAML (default: <panel>.schema.yaml)")
    p.add_argument("--estimator", default="ortho", choices=("ortho", "naive", "ipw_msm"))
    p.add_argument("--family", default="ols", choices=("ols", "poisson_log", "probit", "logistic", "cox"))
    p.add_argument("--cumulative", type=_cumulative, default=False,
                   help="extra Cox treatment/covariate summaries: false, true, covariates or history")
    p.add_argument("--history", default="full", choices=("full", "treatment_lag"),
                   help="conditioning set for residualization")
    p.add_argument("--x-family", default="ols", help="family of the covariate models")
    p.add_argument("--msm", default=None, help="MSM form (full, cumulative; current for Cox)")
    p.add_argument("--msm-baseline", action="store_true", help="adjust the MSM for baseline covariates")
    p.add_argument("--monotone", action="store_true", help="treatment is monotone once started")
    p.add_argument("--truncate", type=float, default=None, help="cap IPW weights at this percentile")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orthoreg", description=__doc__.split("\n")[0])
    parser.add_argument("--seed", type=int, default=None, help="root seed (default 0, or the config seed)")
    parser.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    parser.add_argument("--output-dir", default=None, help="directory for written files")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a panel and write it as CSV")
    p.add_argument("--kind", required=True, choices=sorted(DEFAULTS))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--replication", type=int, default=0)
    p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--name", default=None, help="file stem (default: the kind)")

    p = sub.add_parser("fit", help="fit one estimator and print the causal coefficients")
    _add_estimator_flags(p)
    p.add_argument("--format", default="csv", choices=("csv", "json"))

    p = sub.add_parser("bootstrap", help="subject-level bootstrap of one estimator")
    _add_estimator_flags(p)
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--level", type=float, default=0.9)

    p = sub.add_parser("experiment", help="run a replication grid from a config file")
    p.add_argument("config", help=f"YAML path or bundled name ({', '.join(BUNDLED)})")
    p.add_argument("--replications", type=int, default=None, help="override the config")

    p = sub.add_parser("check-positivity", help="per-time propensity range and violations")
    p.add_argument("panel")
    p.add_argument("--schema")
    p.add_argument("--epsilon", type=float, default=0.01)
    return parser


def _load(args):
    panel_path = Path(args.panel)
    schema_path = Path(args.schema) if args.schema else panel_path.with_suffix(".schema.yaml")
    try:
        with open(schema_path, encoding="utf-8") as fh:
            schema = PanelSchema.from_dict(yaml.safe_load(fh))
    except FileNotFoundError:
        raise OrthoregError(f"schema file {schema_path} not found; pass --schema") from None
    return load_panel_csv(panel_path, schema)


def _estimator(args) -> EstimatorConfig:
    msm = args.msm or ("current" if args.family == "cox" else "full")
    spec = PropensitySpec()
    if args.monotone:
        spec = PropensitySpec(monotone=True, numerator_treatment_lags=0, denominator_treatment_lags=0,
                              baseline_in_numerator=args.msm_baseline)
    return EstimatorConfig(args.estimator, args.family, args.cumulative, args.history, args.x_family, msm,
                           args.msm_baseline, spec, args.truncate)


def _emit(df: pd.DataFrame, out_dir, fname, stream) -> None:
    text = df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    stream.write(text)
    if out_dir is not None:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / fname).write_text(text, encoding="utf-8")


def _experiment_config(ref: str) -> ExperimentConfig:
    if ref in BUNDLED and not Path(ref).exists():
        with resources.files("orthoreg.configs").joinpath(f"{ref}.yaml").open("r", encoding="utf-8") as fh:
            return ExperimentConfig.from_dict(yaml.safe_load(fh))
    return ExperimentConfig.from_yaml(ref)


def run(args, stdout=None) -> int:
    stdout = stdout or sys.stdout
    threads = args.threads if args.threads is not None else _default_threads()
    if threads < 1:
        raise OrthoregError("--threads must be at least 1")
    seed = 0 if args.seed is None else args.seed

    if args.command == "simulate":
        cfg = DgpConfig(args.kind, args.n, seed, args.T, dict(args.param), args.replication)
        panel = simulate(cfg)
        out = Path(args.output_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        stem = args.name or args.kind
        schema = write_panel_csv(panel, out / f"{stem}.csv")
        (out / f"{stem}.schema.yaml").write_text(yaml.safe_dump(schema.to_dict(), sort_keys=True), encoding="utf-8")
        (out / f"{stem}.dgp.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True), encoding="utf-8")
        print(out / f"{stem}.csv", file=stdout)
        return 0

    if args.command == "fit":
        est = estimate(_estimator(args), _load(args))
        if args.format == "json":
            stdout.write(json.dumps(est.as_dict(), indent=2) + "\n")
        else:
            rows = [{"coefficient": nm, "estimate": est.theta[j],
                     "se": est.se[j] if est.se is not None else float("nan"),
                     "z": est.theta[j] / est.se[j] if est.se is not None else float("nan")}
                    for j, nm in enumerate(est.names)]
            _emit(pd.DataFrame(rows), args.output_dir, "fit.csv", stdout)
        return 0

    if args.command == "bootstrap":
        res = bootstrap(_estimator(args), _load(args), B=args.B, level=args.level, seed=seed, threads=threads)
        _emit(pd.DataFrame(res.table()), args.output_dir, "bootstrap.csv", stdout)
        return 0

    if args.command == "experiment":
        cfg = _experiment_config(args.config)
        if args.seed is not None or args.replications is not None:
            d = cfg.to_dict()
            if args.seed is not None:
                d["seed"] = args.seed
            if args.replications is not None:
                d["replications"] = args.replications
            d["dgp"] = {k: v for k, v in d["dgp"].items() if k not in ("seed", "replication")}
            cfg = ExperimentConfig.from_dict(d)
        result = run_experiment(cfg, threads=threads)
        paths = result.write(args.output_dir or ".")
        _emit(result.plot_table(), None, "", stdout)
        for p in paths:
            log.info("wrote %s", p)
        if len(result.failures):
            print(f"{len(result.failures)} fits failed; see {cfg.name}_failures.csv", file=sys.stderr)
        return 0

    if args.command == "check-positivity":
        report = check_positivity(_load(args), args.epsilon)
        _emit(report.table(), args.output_dir, "positivity.csv", stdout)
        if not report.ok:
            print("positivity violations or failed propensity fits found", file=sys.stderr)
        return 0
    raise AssertionError(args.command)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (OrthoregError, ValueError, OSError, yaml.YAMLError) as e:
        print(f"orthoreg: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
