"""Per-time-point treatment (propensity) models for binary treatments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import OutcomeKind, PanelDataset
from .regress import DesignMatrix, FitResult, fit_glm, predict


@dataclass(frozen=True)
class PropensitySpec:
    """Regressors of the numerator and denominator treatment models.

    Lags are counted back from the current time; ``None`` means the full
    available history.  The denominator always includes the covariates
    current at ``t`` (``X_t``); ``denominator_covariate_lags`` adds earlier
    ones.  ``features="sign"`` replaces each covariate by the indicator
    ``1[x > 0]``.  With ``monotone=True`` treatment is an absorbing state:
    models are fit among the not-yet-treated and already-treated subjects
    get probability one.  ``at_risk_only`` restricts survival panels to
    subjects still under observation at ``t``.
    """

    numerator_treatment_lags: int | None = 0
    denominator_treatment_lags: int | None = 1
    denominator_covariate_lags: int | None = 0
    baseline_in_numerator: bool = False
    baseline_in_denominator: bool = True
    features: str = "linear"
    monotone: bool = False
    at_risk_only: bool = True

    def __post_init__(self):
        num, den = self.numerator_treatment_lags, self.denominator_treatment_lags
        if num is not None and num < 0 or den is not None and den < 0:
            raise ValueError("lags must be nonnegative")
        if den is not None and (num is None or num > den):
            raise ValueError("denominator regressors must include the numerator's treatment lags")
        if self.baseline_in_numerator and not self.baseline_in_denominator:
            raise ValueError("denominator regressors must include the numerator's baseline covariates")
        if self.features not in ("linear", "sign"):
            raise ValueError(f"unknown covariate features {self.features!r}")


@dataclass(frozen=True, eq=False)
class FittedPropensity:
    t: int
    p1: np.ndarray          # P(A_t = 1 | regressors), every subject
    fitted: np.ndarray      # mask of subjects the model was fit on
    fit: FitResult | None
    converged: bool


def at_risk(panel: PanelDataset, t: int) -> np.ndarray:
    if panel.outcome_kind is not OutcomeKind.SURVIVAL or t == 0:
        return np.ones(panel.n, dtype=bool)
    return panel.y > panel.time_grid[t]


def _lags(k, t):
    return t if k is None else min(k, t)


def propensity_design(panel: PanelDataset, t: int, spec: PropensitySpec, which: str) -> DesignMatrix:
    cols: dict[str, np.ndarray] = {}
    use_baseline = spec.baseline_in_denominator if which == "denominator" else spec.baseline_in_numerator
    if use_baseline:
        for j, name in enumerate(panel.baseline_names):
            cols[name] = panel.baseline[:, j]
    lags = spec.denominator_treatment_lags if which == "denominator" else spec.numerator_treatment_lags
    if not spec.monotone:
        for k in range(1, _lags(lags, t) + 1):
            cols[f"{panel.treatment_name}_lag{k}"] = panel.treatments[:, t - k]
    if which == "denominator":
        for k in range(0, _lags(spec.denominator_covariate_lags, t) + 1):
            X = panel.covariates[t - k]
            for j, name in enumerate(panel.covariate_names[t - k]):
                x = X[:, j]
                cols[f"{name}_lag{k}"] = (x > 0).astype(float) if spec.features == "sign" else x
    return DesignMatrix.from_columns(cols, intercept=True, n=panel.n)


def fit_propensity_at(panel: PanelDataset, t: int, spec: PropensitySpec, which: str) -> FittedPropensity:
    """Logistic model for ``A_t`` at time index ``t`` (0-based)."""
    mask = at_risk(panel, t) if spec.at_risk_only else np.ones(panel.n, dtype=bool)
    treated_before = np.zeros(panel.n, dtype=bool)
    if spec.monotone and t > 0:
        treated_before = panel.treatments[:, t - 1] > 0
        mask = mask & ~treated_before
    D = propensity_design(panel, t, spec, which)
    a = panel.treatments[:, t]
    p1 = np.ones(panel.n)
    fit = None
    if mask.any():
        sub = DesignMatrix(D.values[mask], D.column_names, True)
        fit = fit_glm(sub, a[mask], "logistic")
        p1 = predict(fit, D)
    p1 = np.where(treated_before, 1.0, p1)
    return FittedPropensity(t, p1, mask, fit, True if fit is None else fit.converged)
