"""Orthogonalized regression.

Each covariate ``X_t`` is replaced by its residual ``X~_t`` after regressing
it on the full past ``(baseline, X_1..X_{t-1}, A_1..A_{t-1})``; the outcome
is then regressed on ``(X~_1, A_1, ..., X~_T, A_T)`` and the treatment
coefficients read off as causal parameters.  Probit coefficients are
rescaled by ``sqrt(1 + sigma^2)`` with ``sigma^2 = sum lambda^2 var(X~)``;
Cox fits additionally yield a marginal (log-normal frailty) survival curve.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .data import CountingProcessData, OutcomeKind, PanelDataset, counting_process_index
from .errors import FamilyMismatchError, PanelFormatError
from .propensity import at_risk
from .regress import DesignMatrix, FitResult, breslow_cumhaz, fit, fit_cox, predict

FAMILY_FOR_OUTCOME = {
    "ols": OutcomeKind.CONTINUOUS,
    "poisson_log": OutcomeKind.COUNT,
    "probit": OutcomeKind.BINARY,
    "logistic": OutcomeKind.BINARY,
    "cox": OutcomeKind.SURVIVAL,
}

GH_NODES = 64


@dataclass(frozen=True, eq=False)
class OrthoPanel:
    base: PanelDataset
    residuals: tuple             # T arrays (n, d_t)
    nuisance_fits: tuple         # T tuples of FitResult, one per coordinate
    residual_variances: tuple    # T arrays (d_t,)
    baseline_residuals: np.ndarray
    baseline_variances: np.ndarray
    weights: np.ndarray | None = None
    history: str = "full"
    at_risk_only: bool = False

    @property
    def n_nuisance_fits(self) -> int:
        return sum(len(f) for f in self.nuisance_fits)


@dataclass(frozen=True, eq=False)
class CausalEstimate:
    theta: np.ndarray
    names: tuple
    estimator: str
    family: str
    se: np.ndarray | None = None
    interval: tuple | None = None
    level: float | None = None
    intercept: float | None = None
    rescale_sigma2: float | None = None

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) != len(theta):
            raise ValueError("one name per causal parameter")
        if not np.all(np.isfinite(theta)):
            raise ValueError("causal parameters must be finite")
        if self.estimator not in ("ortho", "naive", "ipw_msm"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.se is not None:
            se = np.atleast_1d(np.asarray(self.se, dtype=float))
            if np.any(se < 0):
                raise ValueError("standard errors must be nonnegative")
            object.__setattr__(self, "se", se)
        if self.interval is not None:
            lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in self.interval)
            if np.any(lo > theta) or np.any(hi < theta):
                raise ValueError("interval does not contain the point estimate")
            object.__setattr__(self, "interval", (lo, hi))

    def as_dict(self) -> dict:
        out = {"estimator": self.estimator, "family": self.family}
        for j, name in enumerate(self.names):
            out[name] = float(self.theta[j])
            if self.se is not None:
                out[f"{name}_se"] = float(self.se[j])
            if self.interval is not None:
                out[f"{name}_lower"] = float(self.interval[0][j])
                out[f"{name}_upper"] = float(self.interval[1][j])
        if self.intercept is not None:
            out["intercept"] = float(self.intercept)
        if self.rescale_sigma2 is not None:
            out["rescale_sigma2"] = float(self.rescale_sigma2)
        return out


@dataclass(frozen=True, eq=False)
class MarginalSurvivalCurve:
    abar: np.ndarray
    times: np.ndarray
    survival: np.ndarray
    sigma2: float


# ---------------------------------------------------------------------------
# residualization
# ---------------------------------------------------------------------------

def _wmean(x, w):
    return x.mean(axis=0) if w is None else np.average(x, axis=0, weights=w)


def history_columns(panel: PanelDataset, t: int, X_blocks=None, B=None, history: str = "full") -> dict:
    """Regressors available before ``X_t`` (0-based ``t``), without intercept."""
    X_blocks = panel.covariates if X_blocks is None else X_blocks
    B = panel.baseline if B is None else B
    a = panel.treatment_name
    cols: dict[str, np.ndarray] = {}
    if history == "treatment_lag":
        if t > 0:
            cols[f"{a}_{t}"] = panel.treatments[:, t - 1]
        return cols
    if history != "full":
        raise ValueError(f"unknown history {history!r}")
    for j, name in enumerate(panel.baseline_names):
        cols[name] = B[:, j]
    for s in range(t):
        for j, name in enumerate(panel.covariate_names[s]):
            cols[f"{name}_{s + 1}"] = X_blocks[s][:, j]
        cols[f"{a}_{s + 1}"] = panel.treatments[:, s]
    return cols


def residualize(panel: PanelDataset, x_family: str = "ols", weights=None, history: str = "full",
                at_risk_only: bool | None = None) -> OrthoPanel:
    """Replace each covariate by its residual given the observed past.

    For every time ``t`` and covariate coordinate, fit ``X_t`` on the past
    with an intercept (``x_family``: ``ols``, or a GLM family for count or
    binary covariates), and keep ``X_t - fitted``.  ``X~_1`` is
    mean-centred ``X_1``; baseline covariates are mean-centred.  Residual
    variances use the ``(n - p_t)`` denominator.  ``history="treatment_lag"``
    regresses on ``A_{t-1}`` only.  For survival panels ``g_t`` is fit on
    the subjects still at risk at ``t`` (the default) and applied to all.
    """
    if panel.T == 0:
        raise PanelFormatError("panel has no time points")
    if at_risk_only is None:
        at_risk_only = panel.outcome_kind is OutcomeKind.SURVIVAL
    w = None if weights is None else np.asarray(weights, dtype=float)
    wsum = panel.n if w is None else w.sum()
    B = panel.baseline - _wmean(panel.baseline, w) if panel.baseline.shape[1] else panel.baseline
    bvar = (np.sum((B ** 2) * (1 if w is None else w[:, None]), axis=0) / (wsum - 1)
            if B.shape[1] else np.zeros(0))
    residuals, fits, variances = [], [], []
    for t in range(panel.T):
        X = panel.covariates[t]
        if X.shape[1] == 0:
            residuals.append(X)
            fits.append(())
            variances.append(np.zeros(0))
            continue
        D = DesignMatrix.from_columns(history_columns(panel, t, history=history), intercept=True, n=panel.n)
        rows = at_risk(panel, t) if at_risk_only else slice(None)
        Dt = DesignMatrix(D.values[rows], D.column_names, True)
        wt = None if w is None else w[rows]
        R = np.empty_like(X)
        fits_t, var_t = [], []
        for j in range(X.shape[1]):
            f = fit(Dt, X[rows, j], x_family, wt)
            R[:, j] = X[:, j] - predict(f, D)
            if x_family == "ols":
                v = f.scale
            else:
                r2 = R[rows, j] ** 2
                v = float((r2 if wt is None else wt * r2).sum() / (f.weight_total - D.p))
            fits_t.append(f)
            var_t.append(v)
        R.setflags(write=False)
        residuals.append(R)
        fits.append(tuple(fits_t))
        variances.append(np.array(var_t))
    return OrthoPanel(panel, tuple(residuals), tuple(fits), tuple(variances), B, bvar, w, history, at_risk_only)


# ---------------------------------------------------------------------------
# designs
# ---------------------------------------------------------------------------

def wide_design(panel: PanelDataset, X_blocks, B) -> DesignMatrix:
    """Intercept, baseline, then ``(X_t, A_t)`` for t = 1..T."""
    a = panel.treatment_name
    cols: dict[str, np.ndarray] = {}
    for j, name in enumerate(panel.baseline_names):
        cols[name] = B[:, j]
    for t in range(panel.T):
        for j, name in enumerate(panel.covariate_names[t]):
            cols[f"{name}_{t + 1}"] = X_blocks[t][:, j]
        cols[f"{a}_{t + 1}"] = panel.treatments[:, t]
    return DesignMatrix.from_columns(cols, intercept=True, n=panel.n)


CUMULATIVE_MODES = (False, True, "covariates", "history")


def cumulative_parts(cumulative) -> tuple:
    """``(running mean of covariates, running mean of treatment, separate past covariates)`` flags."""
    if cumulative not in CUMULATIVE_MODES:
        raise ValueError(f"cumulative must be one of {CUMULATIVE_MODES}, got {cumulative!r}")
    if cumulative == "history":
        return False, False, True
    return bool(cumulative), cumulative is True, False


def treatment_columns(panel: PanelDataset, family: str, cumulative=False) -> list[str]:
    a = panel.treatment_name
    if family == "cox":
        return [a, f"cum_{a}"] if cumulative_parts(cumulative)[1] else [a]
    return [f"{a}_{t + 1}" for t in range(panel.T)]


def cox_design(panel: PanelDataset, X_blocks, B, cumulative=False, include_covariates: bool = True,
               include_baseline: bool = True) -> CountingProcessData:
    """Counting-process rows where ``(X_t, A_t)`` are in force on interval ``t``.

    With ``cumulative=True`` the running means over ``s <= t`` of the
    covariates and of the treatment are appended as ``cum_<name>`` columns;
    ``cumulative="covariates"`` appends only the covariate means.  With
    ``cumulative="history"`` every earlier covariate ``X_s`` gets its own
    column ``<name>_s``, zero before period ``s``, so each time point keeps
    its own coefficient.
    """
    dims = {X.shape[1] for X in X_blocks}
    if include_covariates and len(dims) > 1:
        raise PanelFormatError("Cox rows need the same covariate dimension at every time point")
    if include_covariates and len(set(panel.covariate_names)) > 1:
        raise PanelFormatError("Cox rows need the same covariate names at every time point")
    subj, period, tstart, tstop, event = counting_process_index(panel)
    a = panel.treatment_name
    names, blocks = [], []
    d = dims.pop() if dims else 0
    cum_x, cum_a, past_x = cumulative_parts(cumulative)
    if include_covariates and d:
        Xs = np.stack(X_blocks, axis=1)  # (n, T, d)
        blocks.append(Xs[subj, period])
        names += list(panel.covariate_names[0])
        for s in range(panel.T - 1) if past_x else ():
            blocks.append(np.where((period > s)[:, None], Xs[subj, s], 0.0))
            names += [f"{c}_{s + 1}" for c in panel.covariate_names[0]]
    blocks.append(panel.treatments[subj, period][:, None])
    names.append(a)
    if include_baseline and B.shape[1]:
        blocks.append(B[subj])
        names += list(panel.baseline_names)
    steps = np.arange(1, panel.T + 1)
    if cum_x and include_covariates and d:
        cumX = np.cumsum(np.stack(X_blocks, axis=1), axis=1) / steps[None, :, None]
        blocks.append(cumX[subj, period])
        names += [f"cum_{c}" for c in panel.covariate_names[0]]
    if cum_a:
        cumA = np.cumsum(panel.treatments, axis=1) / steps[None, :]
        blocks.append(cumA[subj, period][:, None])
        names.append(f"cum_{a}")
    return CountingProcessData(panel.ids[subj], tstart, tstop, event, np.hstack(blocks), tuple(names), period)


def ortho_design(op: OrthoPanel) -> DesignMatrix:
    return wide_design(op.base, op.residuals, op.baseline_residuals)


def ortho_rows(op: OrthoPanel, cumulative=False) -> CountingProcessData:
    return cox_design(op.base, op.residuals, op.baseline_residuals, cumulative=cumulative)


def _row_weights(op: OrthoPanel, rows: CountingProcessData):
    if op.weights is None:
        return None
    pos = {sid: i for i, sid in enumerate(op.base.ids)}
    return op.weights[[pos[s] for s in rows.subject]]


def check_family(panel: PanelDataset, family: str) -> None:
    want = FAMILY_FOR_OUTCOME.get(family)
    if want is None:
        raise FamilyMismatchError(f"unknown outcome family {family!r}")
    if panel.outcome_kind is not want:
        raise FamilyMismatchError(f"family {family!r} needs a {want.value} outcome, panel has {panel.outcome_kind.value}")


def ortho_fit(op: OrthoPanel, y_family: str, cumulative=False) -> FitResult:
    """Regress the outcome on ``(X~_1, A_1, ..., X~_T, A_T)`` (plus baseline).

    Cox fits use counting-process rows without an intercept; the rows are
    kept in ``fit.info["rows"]``.
    """
    panel = op.base
    check_family(panel, y_family)
    if y_family == "cox":
        rows = ortho_rows(op, cumulative)
        w = _row_weights(op, rows)
        f = fit_cox(rows, w)
        f.info["rows"] = rows
        f.info["row_weights"] = w
        f.info["cumulative"] = cumulative
        return f
    return fit(ortho_design(op), panel.y, y_family, op.weights)


def probit_sigma2(fit_: FitResult, op: OrthoPanel) -> float:
    """``sum over time and coordinate of lambda^2 * residual variance``."""
    s2 = 0.0
    for t, names in enumerate(op.base.covariate_names):
        for j, name in enumerate(names):
            s2 += fit_.coef(f"{name}_{t + 1}") ** 2 * op.residual_variances[t][j]
    for j, name in enumerate(op.base.baseline_names):
        s2 += fit_.coef(name) ** 2 * op.baseline_variances[j]
    return float(s2)


def extract_causal(fit_: FitResult, op: OrthoPanel, estimator: str = "ortho") -> CausalEstimate:
    """Causal parameters from an orthogonalized fit.

    Linear, log-linear and Cox coefficients of the treatments are returned
    as they are.  Probit coefficients (and the intercept) are divided by
    ``sqrt(1 + sigma^2)``.  For log-linear fits the reported intercept
    absorbs the empirical moment generating function of the covariate
    part, ``alpha + log mean exp(lambda' X~)``.
    """
    fam = fit_.family
    if fam == "logistic":
        raise FamilyMismatchError("logistic coefficients have no closed-form marginal; use probit "
                                  "(see oracle.marginalize_logistic for the approximation)")
    panel = op.base
    cumulative = fit_.info.get("cumulative", False)
    names = treatment_columns(panel, fam, cumulative)
    if not set(names) <= set(fit_.column_names):
        raise FamilyMismatchError("fit does not carry the treatment columns of this panel")
    idx = [fit_.column_names.index(c) for c in names]
    theta = fit_.coefficients[idx]
    se = fit_.se[idx]
    intercept = fit_.coef("intercept") if "intercept" in fit_.column_names else None
    sigma2 = None
    if fam == "probit":
        sigma2 = probit_sigma2(fit_, op)
        scale = np.sqrt(1.0 + sigma2)
        theta, se, intercept = theta / scale, se / scale, intercept / scale
    elif fam == "poisson_log":
        D = ortho_design(op)
        covariate_part = D.values @ fit_.coefficients - intercept - D.values[:, idx] @ fit_.coefficients[idx]
        intercept = intercept + float(np.log(_wmean(np.exp(covariate_part), op.weights)))
    return CausalEstimate(theta, names, estimator, fam, se=se, intercept=intercept, rescale_sigma2=sigma2)


def ortho_estimate(panel: PanelDataset, y_family: str, *, x_family: str = "ols", weights=None,
                   cumulative=False, history: str = "full", at_risk_only: bool | None = None) -> CausalEstimate:
    """Full pipeline: residualize, fit, extract."""
    check_family(panel, y_family)
    op = residualize(panel, x_family, weights, history, at_risk_only)
    return extract_causal(ortho_fit(op, y_family, cumulative), op)


# ---------------------------------------------------------------------------
# marginal survival under the frailty representation
# ---------------------------------------------------------------------------

def frailty_survival(cumhaz, sigma2: float, n_nodes: int = GH_NODES) -> np.ndarray:
    """``E exp(-L e^Z)`` for ``Z ~ N(0, sigma2)`` by Gauss-Hermite quadrature."""
    L = np.asarray(cumhaz, dtype=float)
    if sigma2 < 0:
        warnings.warn(f"negative random-effect variance {sigma2:g} truncated to 0", RuntimeWarning, stacklevel=2)
        sigma2 = 0.0
    if sigma2 == 0:
        return np.exp(-L)
    x, wts = hermgauss(n_nodes)
    z = np.sqrt(2.0 * sigma2) * x
    vals = np.exp(-L[..., None] * np.exp(z))
    return vals @ wts / np.sqrt(np.pi)


def _period_bounds(grid):
    starts = np.concatenate([[0.0], grid[1:]])
    stops = np.concatenate([grid[1:], [np.inf]])
    return starts, stops


def marginal_survival(fit_: FitResult, op: OrthoPanel, abar, times, rows=None) -> MarginalSurvivalCurve:
    """Survival curve under the fixed treatment path ``abar``.

    Integrates ``exp{-Lambda(abar, t) e^Z}`` over ``Z ~ N(0, sigma^2)``
    with 64-node Gauss-Hermite, where ``Lambda`` accumulates the Breslow
    baseline hazard weighted by ``exp(theta' a_s)`` over the treatment
    periods, and ``sigma^2`` is the variance of the fitted non-treatment
    part of the linear predictor over all subject-periods.  When the
    treatment part is constant in time this is
    ``exp{-H_0(t) exp(theta' a)}`` averaged over the log-normal frailty.
    """
    if fit_.family != "cox":
        raise FamilyMismatchError("marginal survival needs a Cox fit")
    panel = op.base
    cumulative = fit_.info.get("cumulative", False)
    if rows is None:
        rows = fit_.info.get("rows")
    if rows is None:
        rows = ortho_rows(op, cumulative)
    w = fit_.info.get("row_weights", _row_weights(op, rows))
    H = breslow_cumhaz(fit_, rows, w)

    abar = np.asarray(abar, dtype=float)
    if abar.shape != (panel.T,):
        raise ValueError(f"treatment path needs {panel.T} entries")
    times = np.asarray(times, dtype=float)
    a = panel.treatment_name
    lp = fit_.coef(a) * abar
    if cumulative_parts(cumulative)[1]:
        lp = lp + fit_.coef(f"cum_{a}") * np.cumsum(abar) / np.arange(1, panel.T + 1)
    starts, stops = _period_bounds(panel.time_grid)
    Lam = np.zeros_like(times)
    for s in range(panel.T):
        lo = np.minimum(starts[s], times)
        hi = np.minimum(stops[s], times)
        Lam += np.exp(lp[s]) * (H(hi) - H(lo))

    treat = {a, f"cum_{a}"}
    other = [j for j, c in enumerate(fit_.column_names) if c not in treat]
    full = cox_design(panel, op.residuals, op.baseline_residuals, cumulative=cumulative)
    full_cov = full.Z[:, other] @ fit_.coefficients[other]
    # one row per subject-period (cox_design rows already are), unweighted
    sigma2 = float(np.var(full_cov, ddof=1)) if len(other) else 0.0
    surv = frailty_survival(Lam, sigma2)
    return MarginalSurvivalCurve(abar, times, surv, sigma2)
