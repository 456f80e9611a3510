"""Regression engines: weighted OLS, GLMs by IRLS, Cox partial likelihood.

All fits are pure functions of their inputs and return an immutable
:class:`FitResult`.  Rank deficiency is always a hard error, never a silent
column drop, because downstream code pulls treatment coefficients out by
name.

Convergence: relative log-likelihood change below 1e-10 (with a small
Newton step) or gradient max-norm below 1e-8; at most 100 iterations with up
to 20 step halvings each.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit, gammaln, log_ndtr, ndtr, ndtri

from .data import CountingProcessData, CountingProcessRow
from .errors import (
    MonotoneLikelihoodError,
    NonIdentifiableError,
    SeparationError,
    SingularDesignError,
)

GLM_FAMILIES = ("poisson_log", "probit", "logistic")
FAMILIES = ("ols",) + GLM_FAMILIES + ("cox",)

MAX_ITER = 100
MAX_HALVINGS = 20
REL_TOL = 1e-10
GRAD_TOL = 1e-8
RCOND_MIN = 1e-12
DIVERGENCE_NORM = 1e4


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    values: np.ndarray
    column_names: tuple
    has_intercept: bool = False

    def __post_init__(self):
        X = np.asarray(self.values, dtype=float)
        if X.ndim != 2:
            raise ValueError("design matrix must be two-dimensional")
        if len(self.column_names) != X.shape[1]:
            raise ValueError(f"{X.shape[1]} columns but {len(self.column_names)} names")
        if len(set(self.column_names)) != len(self.column_names):
            raise ValueError("duplicate column names")
        if not np.all(np.isfinite(X)):
            raise ValueError("design matrix has non-finite entries")
        X = X.copy()
        X.setflags(write=False)
        object.__setattr__(self, "values", X)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @classmethod
    def from_columns(cls, columns: dict, intercept: bool = True, n: int | None = None) -> "DesignMatrix":
        names = list(columns)
        cols = [np.asarray(columns[k], dtype=float) for k in names]
        if n is None:
            if not cols:
                raise ValueError("row count is needed when there are no columns")
            n = len(cols[0])
        if intercept:
            names = ["intercept"] + names
            cols = [np.ones(n)] + cols
        return cls(np.column_stack(cols) if cols else np.zeros((n, 0)), tuple(names), intercept)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]


@dataclass(frozen=True, eq=False)
class FitResult:
    family: str
    column_names: tuple
    coefficients: np.ndarray
    covariance: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    nobs: int
    gradient: np.ndarray
    scale: float = 1.0
    weight_total: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def params(self) -> dict:
        return dict(zip(self.column_names, self.coefficients))

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.column_names.index(name)])


def _weights(w, n):
    if w is None:
        return np.ones(n)
    w = np.asarray(getattr(w, "values", w), dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights must have length {n}, got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    if not np.any(w > 0):
        raise ValueError("weights are all zero")
    return w


def _as_design(X) -> DesignMatrix:
    if isinstance(X, DesignMatrix):
        return X
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return DesignMatrix(X, tuple(f"x{j}" for j in range(X.shape[1])))


def check_rank(X: np.ndarray, w: np.ndarray, names: Sequence[str]) -> None:
    """Raise :class:`SingularDesignError` unless sqrt(w) X has full column rank.

    Columns are scaled to unit norm, then a pivoted QR flags the trailing
    pivots whose diagonal falls below ``RCOND_MIN`` relative to the first.
    """
    n, p = X.shape
    if p == 0:
        return
    Xw = X * np.sqrt(w)[:, None]
    norms = np.linalg.norm(Xw, axis=0)
    zero = [names[j] for j in np.flatnonzero(norms == 0)]
    if zero:
        raise SingularDesignError(f"singular design: all-zero column(s) {zero}", zero)
    if np.count_nonzero(w) < p:
        raise SingularDesignError(f"singular design: {np.count_nonzero(w)} weighted rows for {p} columns", names)
    _, R, piv = linalg.qr(Xw / norms, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    bad = np.flatnonzero(d < RCOND_MIN * d[0])
    if bad.size:
        dep = [names[piv[k]] for k in bad]
        raise SingularDesignError(f"singular design: column(s) {dep} are linearly dependent on the others", dep)


def _wls(X, w, z):
    """Weighted least squares via QR; returns (beta, R) with R from sqrt(w) X = QR."""
    sw = np.sqrt(w)
    Q, R = np.linalg.qr(X * sw[:, None])
    beta = linalg.solve_triangular(R, Q.T @ (z * sw))
    return beta, R


def _inv_from_r(R):
    Rinv = linalg.solve_triangular(R, np.eye(R.shape[0]))
    return Rinv @ Rinv.T


def _sym_inverse(M, names):
    """Inverse of a symmetric positive definite matrix with a condition guard."""
    M = 0.5 * (M + M.T)
    try:
        c, low = linalg.cho_factor(M)
    except linalg.LinAlgError:
        raise SingularDesignError("information matrix is not positive definite", names) from None
    d = np.diag(c) ** 2
    if d.min() < RCOND_MIN * d.max():
        raise SingularDesignError("information matrix is numerically singular", names)
    inv = linalg.cho_solve((c, low), np.eye(M.shape[0]))
    return 0.5 * (inv + inv.T)


# ---------------------------------------------------------------------------
# OLS
# ---------------------------------------------------------------------------

def fit_ols(X, y, w=None) -> FitResult:
    """Weighted least squares.

    ``covariance = s2 (X'WX)^-1`` with ``s2 = sum(w r^2) / (sum(w) - p)``,
    i.e. weights act as frequency weights.  ``loglik`` is the Gaussian
    log-likelihood at the ML variance.
    """
    D = _as_design(X)
    Xv = D.values
    y = np.asarray(y, dtype=float)
    n, p = Xv.shape
    if y.shape != (n,):
        raise ValueError(f"response has length {len(y)}, design has {n} rows")
    if not np.all(np.isfinite(y)):
        raise ValueError("response must be finite")
    w = _weights(w, n)
    if n < p:
        raise SingularDesignError(f"singular design: {n} rows for {p} columns", D.column_names)
    check_rank(Xv, w, D.column_names)
    beta, R = _wls(Xv, w, y)
    r = y - Xv @ beta
    W = w.sum()
    rss = float(np.sum(w * r * r))
    dof = W - p
    s2 = rss / dof if dof > 0 else np.nan
    cov = s2 * _inv_from_r(R) if dof > 0 else np.full((p, p), np.nan)
    sig2_ml = rss / W
    if sig2_ml > 0:
        ll = -0.5 * W * (np.log(2 * np.pi * sig2_ml) + 1)
    else:
        ll = np.inf
    grad = Xv.T @ (w * r)
    return FitResult("ols", D.column_names, beta, 0.5 * (cov + cov.T), float(ll), True, 1, n, grad,
                     scale=float(s2), weight_total=float(W))


# ---------------------------------------------------------------------------
# GLM likelihoods
# ---------------------------------------------------------------------------

def _mills(eta):
    """phi(eta) / Phi(eta), stable in both tails."""
    return np.exp(-0.5 * eta * eta - 0.5 * np.log(2 * np.pi) - log_ndtr(eta))


def _glm_pieces(eta, y, family):
    """Per-observation log-likelihood, d/deta, d2/deta2 and expected information."""
    if family == "poisson_log":
        mu = np.exp(eta)
        ll = y * eta - mu - gammaln(y + 1)
        return ll, y - mu, -mu, mu
    if family == "logistic":
        p = expit(eta)
        ll = y * eta - np.logaddexp(0, eta)
        v = p * (1 - p)
        return ll, y - p, -v, v
    if family == "probit":
        l1 = _mills(eta)    # phi/Phi(eta)
        l0 = _mills(-eta)   # phi/Phi(-eta)
        ll = y * log_ndtr(eta) + (1 - y) * log_ndtr(-eta)
        d1 = y * l1 - (1 - y) * l0
        d2 = -y * l1 * (eta + l1) - (1 - y) * l0 * (l0 - eta)
        return ll, d1, d2, l1 * l0
    raise ValueError(f"unknown GLM family {family!r}")


def glm_loglik(beta, X, y, family, w=None) -> float:
    X = np.asarray(X, float)
    w = _weights(w, X.shape[0])
    ll, *_ = _glm_pieces(X @ beta, np.asarray(y, float), family)
    return float(np.sum(w * ll))


def glm_score(beta, X, y, family, w=None) -> np.ndarray:
    X = np.asarray(X, float)
    w = _weights(w, X.shape[0])
    _, d1, _, _ = _glm_pieces(X @ beta, np.asarray(y, float), family)
    return X.T @ (w * d1)


def glm_hessian(beta, X, y, family, w=None) -> np.ndarray:
    """Observed Hessian of the weighted log-likelihood."""
    X = np.asarray(X, float)
    w = _weights(w, X.shape[0])
    _, _, d2, _ = _glm_pieces(X @ beta, np.asarray(y, float), family)
    return (X * (w * d2)[:, None]).T @ X


def _check_response(y, family):
    if family == "poisson_log":
        if np.any(y < 0):
            raise ValueError("poisson_log response must be nonnegative")
    elif not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError(f"{family} response must be 0/1")


def _start(X, y, w, family):
    ybar = np.average(y, weights=w)
    if family == "poisson_log":
        mu0 = (y + max(ybar, 1e-3)) / 2
        z = np.log(mu0)
    else:
        mu0 = (y + 0.5) / 2
        z = np.log(mu0 / (1 - mu0)) if family == "logistic" else ndtri(mu0)
    beta, _ = _wls(X, w, z)
    return beta


def _probe_divergence(loglik_fn, beta, ll, directions):
    """Directions along which the log-likelihood keeps rising (or stays flat).

    For a proper maximum a large move along any direction costs a lot of
    log-likelihood; under separation/monotone likelihood it costs nothing.
    """
    tol = 1e-7 * (1.0 + abs(ll))
    hits = []
    for label, d in directions:
        for sgn in (1.0, -1.0):
            if loglik_fn(beta + sgn * d) >= ll - tol:
                hits.append(label)
                break
    return hits


def _newton(loglik_fn, terms_fn, beta0):
    """Damped Newton ascent shared by the GLM and Cox fitters.

    ``terms_fn(beta)`` returns ``(ll, score, info)`` with ``info`` positive
    (semi)definite; the step is ``info^-1 score`` with step halving.
    """
    beta = beta0.copy()
    ll, g, info = terms_fn(beta)
    converged = False
    it = 0
    last_step = np.zeros_like(beta)
    diverging = False
    for it in range(1, MAX_ITER + 1):
        if np.max(np.abs(g), initial=0.0) < GRAD_TOL:
            converged = True
            it -= 1
            break
        try:
            step = linalg.solve(0.5 * (info + info.T), g, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            step = np.linalg.lstsq(info, g, rcond=None)[0]
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + step
            ll_new = loglik_fn(cand)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            step = step / 2
        else:
            break
        last_step = cand - beta
        beta = cand
        ll_old = ll
        ll, g, info = terms_fn(beta)
        if np.linalg.norm(beta) > DIVERGENCE_NORM and ll > ll_old:
            diverging = True
            break
        rel = abs(ll - ll_old) / max(abs(ll_old), 1e-300)
        small_step = np.max(np.abs(last_step)) < 1e-8 * (1 + np.max(np.abs(beta)))
        if (rel < REL_TOL and small_step) or np.max(np.abs(g), initial=0.0) < GRAD_TOL:
            converged = True
            break
    return beta, ll, g, info, converged, it, last_step, diverging


def fit_glm(X, y, family: str, w=None) -> FitResult:
    """Maximum likelihood GLM fit by IRLS (Newton weights) with step halving.

    Families: ``poisson_log`` (log link; any nonnegative response, so
    population-level fits with fractional means are allowed), ``probit``
    and ``logistic`` (0/1 response).  The covariance is the inverse observed
    information at the optimum.

    Raises
    ------
    SeparationError
        The likelihood does not attain its supremum (complete or
        quasi-complete separation, or the coefficient norm exceeding 1e4
        while the likelihood still improves).
    """
    if family not in GLM_FAMILIES:
        raise ValueError(f"unknown GLM family {family!r}")
    D = _as_design(X)
    Xv = D.values
    y = np.asarray(y, dtype=float)
    n, p = Xv.shape
    if y.shape != (n,):
        raise ValueError(f"response has length {len(y)}, design has {n} rows")
    w = _weights(w, n)
    _check_response(y, family)
    if n < p:
        raise SingularDesignError(f"singular design: {n} rows for {p} columns", D.column_names)
    check_rank(Xv, w, D.column_names)

    def loglik_fn(b):
        ll, *_ = _glm_pieces(Xv @ b, y, family)
        return float(np.sum(w * ll))

    def terms_fn(b):
        # observed-information weights; the probit log-likelihood is concave so
        # these stay positive and give quadratic convergence
        ll, d1, d2, _ = _glm_pieces(Xv @ b, y, family)
        return float(np.sum(w * ll)), Xv.T @ (w * d1), (Xv * (w * -d2)[:, None]).T @ Xv

    beta0 = _start(Xv, y, w, family)
    if not np.isfinite(loglik_fn(beta0)):
        beta0 = np.zeros(p)
    beta, ll, g, _, converged, it, last_step, diverging = _newton(loglik_fn, terms_fn, beta0)
    scale = np.max(np.abs(Xv), axis=0)
    dirs = [(D.column_names[j], 10.0 / scale[j] * np.eye(p)[j]) for j in range(p) if scale[j] > 0]
    reach = np.max(np.abs(Xv @ last_step))
    if reach > 0:
        dirs.append(("last-step direction", last_step * (10.0 / reach)))
    hits = _probe_divergence(loglik_fn, beta, ll, dirs)
    if diverging or hits:
        raise SeparationError(
            f"{family} likelihood is monotone (separation); diverging along {hits or ['coefficient norm']}")
    if not converged:
        warnings.warn(f"{family} fit did not converge in {MAX_ITER} iterations", RuntimeWarning, stacklevel=2)
    H = glm_hessian(beta, Xv, y, family, w)
    cov = _sym_inverse(-H, D.column_names)
    return FitResult(family, D.column_names, beta, cov, ll, converged, it, n, g, weight_total=float(w.sum()))


# ---------------------------------------------------------------------------
# Cox partial likelihood (counting-process rows, Breslow ties)
# ---------------------------------------------------------------------------

class _CoxIndex:
    """Sort orders and risk-set bookkeeping that do not depend on beta.

    The risk set at event time tau is {rows : tstart < tau <= tstop}; its
    sums are (sum over tstop >= tau) - (sum over tstart >= tau), taken from
    cumulative sums in descending time order.
    """

    def __init__(self, data: CountingProcessData, w):
        self.Z = data.Z
        self.w = w
        ev = data.event > 0
        self.event_mask = ev
        times = np.unique(data.tstop[ev])
        self.times = times
        m = len(data.tstop)
        self.stop_order = np.argsort(-data.tstop, kind="stable")
        self.start_order = np.argsort(-data.tstart, kind="stable")
        stop_asc = np.sort(data.tstop)
        start_asc = np.sort(data.tstart)
        self.n_stop = m - np.searchsorted(stop_asc, times, side="left")
        self.n_start = m - np.searchsorted(start_asc, times, side="left")
        # weighted event count per unique event time
        pos = np.searchsorted(times, data.tstop[ev])
        self.dw = np.bincount(pos, weights=w[ev], minlength=len(times))
        self.event_w = w * ev

    def risk_sums(self, r, rz=None, rzz=None):
        out = []
        for arr in (r, rz, rzz):
            if arr is None:
                out.append(None)
                continue
            zero = np.zeros((1,) + arr.shape[1:])
            cs_stop = np.concatenate([zero, np.cumsum(arr[self.stop_order], axis=0)])
            cs_start = np.concatenate([zero, np.cumsum(arr[self.start_order], axis=0)])
            out.append(cs_stop[self.n_stop] - cs_start[self.n_start])
        return out


def _cox_terms(beta, idx: _CoxIndex, order=2):
    Z, w = idx.Z, idx.w
    eta = Z @ beta
    c = eta.max() if eta.size else 0.0
    r = w * np.exp(eta - c)
    rz = r[:, None] * Z if order >= 1 else None
    rzz = rz[:, :, None] * Z[:, None, :] if order >= 2 else None
    S0, S1, S2 = idx.risk_sums(r, rz, rzz)
    with np.errstate(divide="ignore"):
        logS0 = np.log(S0) + c
    ll = float(np.sum(idx.event_w * eta) - np.sum(idx.dw * logS0))
    if order == 0:
        return ll, None, None
    E1 = S1 / S0[:, None]
    g = Z.T @ idx.event_w - idx.dw @ E1
    if order == 1:
        return ll, g, None
    V = S2 / S0[:, None, None] - E1[:, :, None] * E1[:, None, :]
    info = np.einsum("k,kij->ij", idx.dw, V)
    return ll, g, info


def _as_cp(rows, column_names=()) -> CountingProcessData:
    if isinstance(rows, CountingProcessData):
        return rows
    rows = list(rows)
    if rows and isinstance(rows[0], CountingProcessRow):
        return CountingProcessData.from_rows(rows, column_names)
    raise TypeError("expected CountingProcessData or a list of CountingProcessRow")


def cox_loglik(beta, rows, w=None) -> float:
    data = _as_cp(rows)
    return _cox_terms(np.asarray(beta, float), _CoxIndex(data, _weights(w, len(data))), order=0)[0]


def cox_score(beta, rows, w=None) -> np.ndarray:
    data = _as_cp(rows)
    return _cox_terms(np.asarray(beta, float), _CoxIndex(data, _weights(w, len(data))), order=1)[1]


def cox_hessian(beta, rows, w=None) -> np.ndarray:
    data = _as_cp(rows)
    return -_cox_terms(np.asarray(beta, float), _CoxIndex(data, _weights(w, len(data))), order=2)[2]


def fit_cox(rows, w=None, column_names=()) -> FitResult:
    """Weighted Cox partial-likelihood fit with Breslow ties, by damped Newton.

    ``rows`` is a list of :class:`CountingProcessRow` or a
    :class:`CountingProcessData`; ``w`` gives one case weight per row.

    Raises
    ------
    ValueError
        No events.
    NonIdentifiableError
        Some covariate combination is constant within every risk set.
    MonotoneLikelihoodError
        The partial likelihood increases without bound (e.g. perfect risk
        ordering).
    """
    data = _as_cp(rows, column_names)
    names = data.column_names
    m, p = data.Z.shape
    w = _weights(w, m)
    if not np.any((data.event > 0) & (w > 0)):
        raise ValueError("Cox fit needs at least one (positively weighted) event")
    idx = _CoxIndex(data, w)

    _, _, info0 = _cox_terms(np.zeros(p), idx)
    dvar = np.diag(info0)
    flat = [names[j] for j in range(p) if dvar[j] <= 1e-14 * max(1.0, np.max(np.abs(data.Z[:, j])) ** 2)]
    if flat:
        raise NonIdentifiableError(f"partial likelihood is flat in {flat}: covariate constant within every risk set")
    sd = np.sqrt(dvar)
    corr = info0 / np.outer(sd, sd)
    ev = np.linalg.eigvalsh(0.5 * (corr + corr.T))
    if ev[0] < RCOND_MIN * ev[-1]:
        raise NonIdentifiableError("partial likelihood is flat along a linear combination of covariates")

    def loglik_fn(b):
        return _cox_terms(b, idx, order=0)[0]

    def terms_fn(b):
        return _cox_terms(b, idx, order=2)

    beta, ll, g, info, converged, it, last_step, diverging = _newton(loglik_fn, terms_fn, np.zeros(p))
    spread = np.ptp(data.Z, axis=0)
    dirs = [(names[j], 10.0 / spread[j] * np.eye(p)[j]) for j in range(p) if spread[j] > 0]
    reach = np.ptp(data.Z @ last_step)
    if reach > 0:
        dirs.append(("last-step direction", last_step * (10.0 / reach)))
    hits = _probe_divergence(loglik_fn, beta, ll, dirs)
    if diverging or hits:
        raise MonotoneLikelihoodError(
            f"partial likelihood is monotone (coefficient escapes to infinity) along {hits or ['coefficient norm']}")
    if not converged:
        warnings.warn(f"Cox fit did not converge in {MAX_ITER} iterations", RuntimeWarning, stacklevel=2)
    cov = _sym_inverse(info, names)
    return FitResult("cox", names, beta, cov, ll, converged, it, m, g, weight_total=float(w.sum()),
                     info={"n_events": float(idx.dw.sum())})


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous nondecreasing step function with jumps at ``times``."""

    times: np.ndarray
    jumps: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.cumsum(self.jumps)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right")
        cum = np.concatenate([[0.0], self.values])
        return cum[k]


def breslow_cumhaz(fit: FitResult, rows, w=None) -> StepFunction:
    """Breslow estimate of the baseline cumulative hazard at the fitted beta."""
    if fit.family != "cox":
        raise ValueError("Breslow estimator needs a Cox fit")
    data = _as_cp(rows, fit.column_names)
    if data.Z.shape[1] != len(fit.coefficients):
        raise ValueError("rows do not match the fitted coefficients")
    w = _weights(w, len(data))
    if not np.any(data.event > 0):
        return StepFunction(np.zeros(0), np.zeros(0))
    idx = _CoxIndex(data, w)
    eta = data.Z @ fit.coefficients
    S0, _, _ = idx.risk_sums(w * np.exp(eta))
    return StepFunction(idx.times, idx.dw / S0)


def predict(fit: FitResult, X) -> np.ndarray:
    """Fitted means for OLS/GLM fits, linear predictors for Cox fits."""
    if isinstance(X, DesignMatrix):
        if tuple(X.column_names) != tuple(fit.column_names):
            raise ValueError(f"column mismatch: fit has {list(fit.column_names)}, got {list(X.column_names)}")
        Xv = X.values
    else:
        Xv = np.asarray(X, dtype=float)
        if Xv.ndim != 2 or Xv.shape[1] != len(fit.coefficients):
            raise ValueError("column mismatch")
    eta = Xv @ fit.coefficients
    if fit.family in ("ols", "cox"):
        return eta
    if fit.family == "poisson_log":
        return np.exp(eta)
    if fit.family == "logistic":
        return expit(eta)
    if fit.family == "probit":
        return ndtr(eta)
    raise ValueError(f"unknown family {fit.family!r}")


def fit(X, y, family: str, w=None) -> FitResult:
    """Dispatch to :func:`fit_ols` or :func:`fit_glm`."""
    if family == "ols":
        return fit_ols(X, y, w)
    return fit_glm(X, y, family, w)
