"""Simulated longitudinal studies.

Four generators, selected by ``DgpConfig.kind``:

``gaussian_scm``
    Two-period Gaussian collider model (``A1 -> X2 -> A2``, phantom ``U``
    into ``X2`` and ``Y``).
``linear_nongaussian``
    ``T`` periods of binary treatment; ``X_t`` is Gaussian with mean
    ``effect_ax A_{t-1} + effect_ux U``; the outcome is
    ``outcome_u U + sum effect_t A_t`` plus centred log-normal noise.
``cox_synthetic``
    Piecewise-exponential survival on a unit grid with per-subject
    baseline hazards uniform on ``[h, phantom_ratio h]``; the covariate
    tracks the standardized log hazard and past treatment.
``hiv_like``
    Baseline age and sex, a declining square-root-CD4-like covariate,
    monotone treatment initiation that becomes likelier as the covariate
    drops, and a protective (or null) treatment effect on mortality.

All draws come from ``substream(seed, "dgp", replication)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import OutcomeKind, PanelDataset
from .errors import ConfigError
from .oracle import GaussianScm
from .rng import substream

DEFAULTS = {
    "gaussian_scm": {"rho_ax": 0.6, "rho_xa": 0.5, "rho_ux": 0.5, "treatment_effects": [0.0, 0.0]},
    "linear_nongaussian": {
        "effect_ax": 1.0, "effect_ux": 1.0, "outcome_u": 1.0, "overlap": "logistic",
        "treatment_slope": 1.0, "sign_agreement": 0.95, "treatment_effect": 0.0, "noise_sd": 1.0,
    },
    "cox_synthetic": {
        "effect_ax": 1.0, "effect_ux": 1.0, "treatment_slope": 1.0, "treatment_center": 0.0,
        "base_hazard": 0.1, "phantom_ratio": 3.0, "risk_reduction": 0.0, "noise_sd": 1.0,
    },
    "hiv_like": {
        "age_mean": 40.0, "age_sd": 8.0, "female_fraction": 0.3,
        "cd4_start": 22.0, "cd4_start_sd": 3.0, "cd4_decline": 0.5, "cd4_health_slope": 0.1,
        "cd4_treatment_gain": 1.0, "noise_sd": 1.0,
        "initiation_intercept": -3.0, "initiation_slope": 0.4, "initiation_threshold": 20.0,
        "base_hazard": 0.01, "hazard_health": 0.5, "hazard_age": 0.03, "hazard_female": -0.2,
        "risk_reduction": 0.3,
    },
}
DEFAULT_T = {"gaussian_scm": 2, "linear_nongaussian": 5, "cox_synthetic": 5, "hiv_like": 15}
OVERLAPS = ("high", "low", "logistic")


@dataclass(frozen=True)
class DgpConfig:
    kind: str
    n: int
    seed: int = 0
    T: int | None = None
    params: dict = field(default_factory=dict)
    replication: int = 0

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise ConfigError(f"unknown DGP kind {self.kind!r}; choose from {sorted(DEFAULTS)}")
        if int(self.n) <= 0:
            raise ConfigError("n must be positive")
        T = DEFAULT_T[self.kind] if self.T is None else int(self.T)
        if T < 1:
            raise ConfigError("T must be at least 1")
        if self.kind == "gaussian_scm" and T != 2:
            raise ConfigError("the Gaussian collider model has exactly two periods")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = {**DEFAULTS[self.kind], **self.params}
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "params", merged)
        if self.kind == "gaussian_scm":
            self.gaussian_scm()  # validates the correlations
        if self.kind == "linear_nongaussian" and merged["overlap"] not in OVERLAPS:
            raise ConfigError(f"overlap must be one of {OVERLAPS}")
        if "risk_reduction" in merged and not 0 <= merged["risk_reduction"] < 1:
            raise ConfigError("risk_reduction must lie in [0, 1)")
        if "phantom_ratio" in merged and merged["phantom_ratio"] < 1:
            raise ConfigError("phantom_ratio must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "DgpConfig":
        d = dict(d)
        try:
            kind, n = d.pop("kind"), d.pop("n")
        except KeyError as e:
            raise ConfigError(f"DGP config is missing {e.args[0]!r}") from None
        known = {"seed", "T", "params", "replication"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown DGP config keys {sorted(extra)}")
        return cls(kind, n, **d)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "seed": self.seed, "T": self.T,
                "params": dict(self.params), "replication": self.replication}

    def with_params(self, **updates) -> "DgpConfig":
        return DgpConfig(self.kind, self.n, self.seed, self.T, {**self.params, **updates}, self.replication)

    def gaussian_scm(self) -> GaussianScm:
        p = self.params
        return GaussianScm(p["rho_ax"], p["rho_xa"], p["rho_ux"], tuple(p["treatment_effects"]))


def _ids(n):
    return np.array([str(i) for i in range(n)])


def _per_period(value, T):
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.size == 1:
        return np.full(T, v[0])
    if v.size != T:
        raise ConfigError(f"expected 1 or {T} values, got {v.size}")
    return v


def _linear_nongaussian(cfg, rng):
    p, n, T = cfg.params, cfg.n, cfg.T
    u = rng.standard_normal(n)
    X = np.empty((n, T))
    A = np.empty((n, T))
    prev = np.zeros(n)
    for t in range(T):
        X[:, t] = p["effect_ax"] * prev + p["effect_ux"] * u + p["noise_sd"] * rng.standard_normal(n)
        draw = rng.random(n)
        if p["overlap"] == "high":
            A[:, t] = draw < 0.5
        elif p["overlap"] == "low":
            sign = X[:, t] > 0
            A[:, t] = np.where(draw < p["sign_agreement"], sign, ~sign)
        else:
            A[:, t] = draw < expit(p["treatment_slope"] * X[:, t])
        prev = A[:, t]
    effect = _per_period(p["treatment_effect"], T)
    noise = np.exp(rng.standard_normal(n)) - np.exp(0.5)
    y = p["outcome_u"] * u + A @ effect + noise
    return PanelDataset(_ids(n), tuple(X[:, [t]] for t in range(T)), A, OutcomeKind.CONTINUOUS, y)


def _piecewise_exponential(rates, rng):
    """Event time for rates constant on unit periods; ``inf`` if none by the end."""
    n, T = rates.shape
    e = rng.exponential(size=n)
    cum = np.cumsum(rates, axis=1)
    start = np.concatenate([np.zeros((n, 1)), cum[:, :-1]], axis=1)
    period = (cum < e[:, None]).sum(axis=1)
    time = np.full(n, np.inf)
    hit = period < T
    k = period[hit]
    time[hit] = k + (e[hit] - start[hit, k]) / rates[hit, k]
    return time


def _cox_synthetic(cfg, rng):
    p, n, T = cfg.params, cfg.n, cfg.T
    h = p["base_hazard"] * rng.uniform(1.0, p["phantom_ratio"], n)
    # log-hazard phantom standardized to [-1, 1]
    span = max(np.log(p["phantom_ratio"]), 1e-12)
    z = 2 * np.log(h / p["base_hazard"]) / span - 1
    X = np.empty((n, T))
    A = np.empty((n, T))
    prev = np.zeros(n)
    for t in range(T):
        X[:, t] = p["effect_ax"] * prev + p["effect_ux"] * z + p["noise_sd"] * rng.standard_normal(n)
        A[:, t] = rng.random(n) < expit(p["treatment_slope"] * (X[:, t] - p["treatment_center"]))
        prev = A[:, t]
    log_hr = np.log1p(-p["risk_reduction"])
    time = _piecewise_exponential(h[:, None] * np.exp(log_hr * A), rng)
    event = np.isfinite(time).astype(float)
    time = np.minimum(time, float(T))
    return PanelDataset(_ids(n), tuple(X[:, [t]] for t in range(T)), A, OutcomeKind.SURVIVAL, time,
                        event=event, time_grid=np.arange(T, dtype=float), covariate_names=(("x",),) * T)


def _hiv_like(cfg, rng):
    p, n, T = cfg.params, cfg.n, cfg.T
    age = p["age_mean"] + p["age_sd"] * rng.standard_normal(n)
    female = (rng.random(n) < p["female_fraction"]).astype(float)
    health = rng.standard_normal(n)
    X = np.empty((n, T))
    A = np.zeros((n, T))
    level = p["cd4_start"] + p["cd4_start_sd"] * health
    treated = np.zeros(n, dtype=bool)
    for t in range(T):
        if t > 0:
            level = (level - p["cd4_decline"] + p["cd4_health_slope"] * health
                     + p["cd4_treatment_gain"] * treated)
        X[:, t] = level + p["noise_sd"] * rng.standard_normal(n)
        start = expit(p["initiation_intercept"] - p["initiation_slope"] * (X[:, t] - p["initiation_threshold"]))
        treated = treated | (rng.random(n) < start)
        A[:, t] = treated
    log_hr = np.log1p(-p["risk_reduction"])
    lin = (p["hazard_age"] * (age - p["age_mean"]) + p["hazard_female"] * female
           - p["hazard_health"] * health)
    rates = p["base_hazard"] * np.exp(lin[:, None] + log_hr * A)
    time = _piecewise_exponential(rates, rng)
    event = np.isfinite(time).astype(float)
    time = np.minimum(time, float(T))
    return PanelDataset(_ids(n), tuple(X[:, [t]] for t in range(T)), A, OutcomeKind.SURVIVAL, time,
                        event=event, time_grid=np.arange(T, dtype=float),
                        baseline=np.column_stack([age, female]), baseline_names=("age", "sex"),
                        covariate_names=(("cd4",),) * T)


def simulate(cfg: DgpConfig) -> PanelDataset:
    """Draw one dataset; identical configs give bit-identical panels."""
    rng = substream(cfg.seed, "dgp", cfg.replication)
    if cfg.kind == "gaussian_scm":
        return cfg.gaussian_scm().simulate(cfg.n, rng)
    return {"linear_nongaussian": _linear_nongaussian, "cox_synthetic": _cox_synthetic,
            "hiv_like": _hiv_like}[cfg.kind](cfg, rng)
