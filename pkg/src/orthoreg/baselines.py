"""Comparison estimators: naive regression and IPW-fitted marginal structural models."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .data import PanelDataset
from .errors import FamilyMismatchError, SeparationError
from .ortho import CausalEstimate, check_family, cox_design, treatment_columns, wide_design
from .propensity import PropensitySpec, at_risk, fit_propensity_at
from .regress import DesignMatrix, fit, fit_cox

log = logging.getLogger(__name__)

EXTREME_PROB = 1e-6


def naive_fit(panel: PanelDataset, y_family: str, cumulative=False) -> CausalEstimate:
    """Regress the outcome on raw ``(X_1, A_1, ..., X_T, A_T)`` and report the ``A`` coefficients.

    Inconsistent for the causal effect whenever a covariate is a collider
    on a path from earlier treatment to the outcome.
    """
    check_family(panel, y_family)
    if y_family == "cox":
        rows = cox_design(panel, panel.covariates, panel.baseline, cumulative=cumulative)
        f = fit_cox(rows)
    else:
        f = fit(wide_design(panel, panel.covariates, panel.baseline), panel.y, y_family)
    names = treatment_columns(panel, y_family, cumulative)
    idx = [f.column_names.index(c) for c in names]
    intercept = f.coef("intercept") if "intercept" in f.column_names else None
    return CausalEstimate(f.coefficients[idx], names, "naive", y_family, se=f.se[idx], intercept=intercept)


@dataclass(frozen=True, eq=False)
class IpwWeights:
    values: np.ndarray      # final cumulative weight per subject
    per_time: np.ndarray    # (n, T) cumulative product up to each time

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("weights must be finite and positive")

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def n_eff(self) -> float:
        w = self.values
        return float(w.sum() ** 2 / np.sum(w ** 2))

    def scaled(self, c: float) -> "IpwWeights":
        return IpwWeights(self.values * c, self.per_time * c)

    def truncated(self, q: float = 99.0) -> "IpwWeights":
        """Cap weights at their ``q``-th percentile."""
        cap = np.percentile(self.values, q)
        return IpwWeights(np.minimum(self.values, cap), np.minimum(self.per_time, cap))

    def summary(self) -> dict:
        return {"mean": self.mean, "max": self.max, "n_eff": self.n_eff}


def weights_from_probabilities(treatments, p_num, p_den, at_risk_mask=None) -> IpwWeights:
    """Stabilized weights from fitted ``P(A_t = 1)`` under both models.

    Times at which a subject is no longer at risk contribute a factor of 1.
    """
    A = np.asarray(treatments, dtype=float)
    pn, pd = np.asarray(p_num, dtype=float), np.asarray(p_den, dtype=float)
    num = np.where(A > 0, pn, 1 - pn)
    den = np.where(A > 0, pd, 1 - pd)
    ratio = num / den
    if at_risk_mask is not None:
        ratio = np.where(at_risk_mask, ratio, 1.0)
    per_time = np.cumprod(ratio, axis=1)
    return IpwWeights(per_time[:, -1].copy(), per_time)


def stabilized_weights(panel: PanelDataset, spec: PropensitySpec | None = None, truncate: float | None = None) -> IpwWeights:
    """``prod_t P(A_t = a_t | past A) / P(A_t = a_t | past A, past and current X)``.

    Both models are per-time logistic regressions; see :class:`PropensitySpec`.
    """
    spec = spec or PropensitySpec()
    if not np.all(np.isin(panel.treatments, (0.0, 1.0))):
        raise FamilyMismatchError("inverse probability weights need binary treatments")
    n, T = panel.treatments.shape
    p_num, p_den = np.empty((n, T)), np.empty((n, T))
    mask = np.ones((n, T), dtype=bool)
    for t in range(T):
        try:
            num = fit_propensity_at(panel, t, spec, "numerator")
            den = fit_propensity_at(panel, t, spec, "denominator")
        except SeparationError as e:
            raise SeparationError(f"treatment model at time {t + 1}: {e}") from e
        p_num[:, t], p_den[:, t] = num.p1, den.p1
        if spec.at_risk_only:
            mask[:, t] = at_risk(panel, t)
        if spec.monotone and t > 0:
            mask[:, t] &= panel.treatments[:, t - 1] == 0
    used = np.where(panel.treatments > 0, p_den, 1 - p_den)[mask]
    if used.size and used.min() < EXTREME_PROB:
        warnings.warn(f"fitted treatment probability {used.min():.2e} below {EXTREME_PROB:g}: "
                      "weights will be extreme", RuntimeWarning, stacklevel=2)
    w = weights_from_probabilities(panel.treatments, p_num, p_den, mask)
    if not 0.5 < w.mean < 2:
        log.warning("stabilized weights have mean %.3f; treatment models may be misspecified", w.mean)
    return w.truncated(truncate) if truncate is not None else w


def msm_design(panel: PanelDataset, msm: str = "full", baseline: bool = False) -> DesignMatrix:
    """Treatment-only design: ``full`` (A_1..A_T) or ``cumulative`` (sum of A)."""
    a = panel.treatment_name
    cols: dict[str, np.ndarray] = {}
    if baseline:
        for j, name in enumerate(panel.baseline_names):
            cols[name] = panel.baseline[:, j]
    if msm == "full":
        for t in range(panel.T):
            cols[f"{a}_{t + 1}"] = panel.treatments[:, t]
    elif msm == "cumulative":
        cols[f"cum_{a}"] = panel.treatments.sum(axis=1)
    else:
        raise ValueError(f"unknown marginal structural model {msm!r}")
    return DesignMatrix.from_columns(cols, intercept=True, n=panel.n)


def ipw_msm_fit(panel: PanelDataset, weights: IpwWeights, msm: str = "full", y_family: str = "ols",
                baseline: bool = False) -> CausalEstimate:
    """Weighted fit of a marginal structural model (treatments and baseline only).

    ``ols``: weights are the final cumulative weights.  ``cox``: rows are
    in counting-process form and row ``t`` carries the cumulative weight up
    to ``t``; ``msm="current"`` uses ``A_t`` on interval ``t`` and
    ``msm="cumulative"`` adds the running mean of ``A``.
    """
    if y_family not in ("ols", "cox"):
        raise FamilyMismatchError("marginal structural models are fit by weighted least squares or weighted Cox")
    check_family(panel, y_family)
    if y_family == "ols":
        D = msm_design(panel, msm, baseline)
        f = fit(D, panel.y, "ols", weights.values)
        names = [c for c in D.column_names if c not in ("intercept",) + tuple(panel.baseline_names)]
        intercept = f.coef("intercept")
    else:
        if msm not in ("current", "cumulative"):
            raise ValueError("Cox marginal structural models are 'current' or 'cumulative'")
        rows = cox_design(panel, panel.covariates, panel.baseline, cumulative=msm == "cumulative",
                          include_covariates=False, include_baseline=baseline)
        pos = {sid: i for i, sid in enumerate(panel.ids)}
        subj = np.array([pos[s] for s in rows.subject])
        f = fit_cox(rows, weights.per_time[subj, rows.period])
        names = treatment_columns(panel, "cox", msm == "cumulative")
        intercept = None
    idx = [f.column_names.index(c) for c in names]
    return CausalEstimate(f.coefficients[idx], names, "ipw_msm", y_family, se=f.se[idx], intercept=intercept)
