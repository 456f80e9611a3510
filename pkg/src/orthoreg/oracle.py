"""Ground-truth machinery for checking the estimators.

* closed-form algebra of the three-variable Gaussian collider model;
* exact g-formula sums over finite-state structural models;
* Monte Carlo evaluation of interventional means and survival curves;
* Gaussian location models with linear, log-linear, probit or Cox outcomes,
  whose interventional laws are known in closed form;
* marginalization of a logistic outcome model over a Gaussian covariate
  term, and its best probit approximation.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
import yaml
from numpy.polynomial.hermite import hermgauss
from scipy.optimize import minimize_scalar
from scipy.special import expit, ndtr

from .data import OutcomeKind, PanelDataset
from .errors import ConfigError, SingularDesignError
from .ortho import frailty_survival
from .rng import seed_sequence

MC_CHUNK = 250_000
LOGISTIC_GH_NODES = 256


# ---------------------------------------------------------------------------
# Gaussian collider model: A1 -> X2 -> A2, U -> X2, U -> Y
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianScm:
    """Standardized Gaussian model over ``(A1, U, X2, A2, Y)``.

    ``X2 = rho_ax A1 + rho_ux U + e``, ``A2 = rho_xa X2 + e'`` and
    ``Y = U + b1 A1 + b2 A2`` with ``treatment_effects = (b1, b2)``
    (zero for the null graph).  ``A1``, ``U``, ``X2`` and ``A2`` have unit
    variance.
    """

    rho_ax: float
    rho_xa: float
    rho_ux: float
    treatment_effects: tuple = (0.0, 0.0)

    def __post_init__(self):
        b = tuple(float(v) for v in self.treatment_effects)
        if len(b) != 2:
            raise ConfigError("treatment_effects needs two entries (A1 -> Y, A2 -> Y)")
        object.__setattr__(self, "treatment_effects", b)
        if 1 - self.rho_ax ** 2 - self.rho_ux ** 2 < -1e-12 or abs(self.rho_xa) > 1:
            raise ConfigError(
                f"correlations rho_ax={self.rho_ax}, rho_ux={self.rho_ux}, rho_xa={self.rho_xa} "
                "do not give a valid covariance matrix")
        if np.linalg.eigvalsh(self.covariance()).min() < -1e-10:
            raise ConfigError("implied covariance is not positive semidefinite")

    @property
    def is_null(self) -> bool:
        return self.treatment_effects == (0.0, 0.0)

    def _structure(self):
        # order: A1, U, X2, A2, Y
        b1, b2 = self.treatment_effects
        B = np.zeros((5, 5))
        B[2, 0], B[2, 1] = self.rho_ax, self.rho_ux
        B[3, 2] = self.rho_xa
        B[4, 1], B[4, 0], B[4, 3] = 1.0, b1, b2
        noise = np.array([1.0, 1.0, max(1 - self.rho_ax ** 2 - self.rho_ux ** 2, 0.0), 1 - self.rho_xa ** 2, 0.0])
        return B, noise

    def full_covariance(self) -> np.ndarray:
        B, noise = self._structure()
        M = np.linalg.inv(np.eye(5) - B)
        return M @ np.diag(noise) @ M.T

    def covariance(self) -> np.ndarray:
        """Covariance of the observed ``(A1, X2, A2, Y)``."""
        return self.full_covariance()[np.ix_([0, 2, 3, 4], [0, 2, 3, 4])]

    def _draw(self, n, rng, abar=None):
        a1 = rng.standard_normal(n) if abar is None else np.full(n, float(abar[0]))
        u = rng.standard_normal(n)
        sd_x = np.sqrt(max(1 - self.rho_ax ** 2 - self.rho_ux ** 2, 0.0))
        x2 = self.rho_ax * a1 + self.rho_ux * u + sd_x * rng.standard_normal(n)
        if abar is None:
            a2 = self.rho_xa * x2 + np.sqrt(1 - self.rho_xa ** 2) * rng.standard_normal(n)
        else:
            a2 = np.full(n, float(abar[1]))
        b1, b2 = self.treatment_effects
        y = u + b1 * a1 + b2 * a2
        return a1, x2, a2, y

    def simulate(self, n: int, rng: np.random.Generator) -> PanelDataset:
        a1, x2, a2, y = self._draw(n, rng)
        return PanelDataset(
            ids=np.array([str(i) for i in range(n)]),
            covariates=(np.zeros((n, 0)), x2[:, None]),
            treatments=np.column_stack([a1, a2]),
            outcome_kind=OutcomeKind.CONTINUOUS,
            y=y,
        )

    def simulate_intervened(self, abar, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._draw(n, rng, abar=np.asarray(abar, dtype=float))[3]


def gaussian_naive_coeffs(scm: GaussianScm) -> tuple:
    """Population coefficients of ``Y`` on ``(A1, X2, A2)``.

    Under the null graph these are
    ``(-rho_ax rho_ux / (1 - rho_ax^2), rho_ux / (1 - rho_ax^2), 0)``;
    direct effects add ``b1`` and ``b2`` to the treatment entries.
    """
    d = 1 - scm.rho_ax ** 2
    if abs(d) < 1e-12:
        raise SingularDesignError("X2 is a deterministic function of A1 (rho_ax^2 = 1)", ("a_1", "x_2"))
    b1, b2 = scm.treatment_effects
    return (b1 - scm.rho_ax * scm.rho_ux / d, scm.rho_ux / d, b2)


def gaussian_causal_theta(scm: GaussianScm) -> tuple:
    """``(theta_1, theta_2)`` recombined from the naive coefficients."""
    beta1, lam2, beta2 = gaussian_naive_coeffs(scm)
    # Cov(A1, X2) / Var(A1) = rho_ax
    return (beta1 + scm.rho_ax * lam2, beta2)


# ---------------------------------------------------------------------------
# finite-state models and the exact g-formula
# ---------------------------------------------------------------------------

def _as_prob(a, what):
    a = np.asarray(a, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a < 0) or np.any(a > 1):
        raise ConfigError(f"{what}: probabilities must lie in [0, 1]")
    return a


@dataclass(frozen=True, eq=False)
class DiscreteScm:
    """Finite covariate supports and binary treatments over ``T`` periods.

    Tables are arrays indexed by the interleaved history
    ``(x_1, a_1, ..., x_t, a_t)`` (support positions for ``x``, 0/1 for
    ``a``):

    * ``px[t]`` has the history before ``X_t`` as leading axes and the
      distribution over ``x_support[t]`` on the last axis;
    * ``pa[t]`` has the history up to and including ``X_t`` and holds
      ``P(A_t = 1)``;
    * ``mu`` has the full history and holds ``E[Y | history]``.
    """

    x_support: tuple
    px: tuple
    pa: tuple
    mu: np.ndarray
    MAX_T = 4

    def __post_init__(self):
        T = len(self.x_support)
        if not 1 <= T <= self.MAX_T:
            raise ConfigError(f"exact summation supports 1..{self.MAX_T} periods, got {T}")
        if len(self.px) != T or len(self.pa) != T:
            raise ConfigError("need one covariate table and one treatment table per period")
        sup = tuple(np.asarray(s, dtype=float).ravel() for s in self.x_support)
        object.__setattr__(self, "x_support", sup)
        px, pa = [], []
        for t in range(T):
            hist = self.history_shape(t)
            p = _as_prob(self.px[t], f"px[{t}]")
            if p.shape != hist + (len(sup[t]),):
                raise ConfigError(f"px[{t}] has shape {p.shape}, expected {hist + (len(sup[t]),)}")
            if np.max(np.abs(p.sum(axis=-1) - 1)) > 1e-12:
                raise ConfigError(f"px[{t}] rows do not sum to 1")
            q = _as_prob(self.pa[t], f"pa[{t}]")
            if q.shape != hist + (len(sup[t]),):
                raise ConfigError(f"pa[{t}] has shape {q.shape}, expected {hist + (len(sup[t]),)}")
            px.append(p)
            pa.append(q)
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != self.history_shape(T):
            raise ConfigError(f"mu has shape {mu.shape}, expected {self.history_shape(T)}")
        object.__setattr__(self, "px", tuple(px))
        object.__setattr__(self, "pa", tuple(pa))
        object.__setattr__(self, "mu", mu)

    @property
    def T(self) -> int:
        return len(self.x_support)

    def history_shape(self, t: int) -> tuple:
        """Axes of ``(x_1, a_1, ..., x_t, a_t)`` for the first ``t`` periods."""
        shape = ()
        for s in range(t):
            shape += (len(self.x_support[s]), 2)
        return shape

    # --- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteScm":
        try:
            return cls(tuple(d["x_support"]), tuple(d["px"]), tuple(d["pa"]), d["mu"])
        except KeyError as e:
            raise ConfigError(f"discrete model is missing {e.args[0]!r}") from None

    @classmethod
    def from_yaml(cls, path) -> "DiscreteScm":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_dict(self) -> dict:
        return {
            "x_support": [s.tolist() for s in self.x_support],
            "px": [p.tolist() for p in self.px],
            "pa": [p.tolist() for p in self.pa],
            "mu": self.mu.tolist(),
        }

    def with_outcome(self, mu) -> "DiscreteScm":
        return replace(self, mu=np.asarray(mu, dtype=float))

    # --- derived quantities --------------------------------------------------

    def _expand(self, arr, t):
        """Broadcast an array over the first-``t``-period history to the full history."""
        full = self.history_shape(self.T)
        return np.broadcast_to(arr.reshape(arr.shape + (1,) * (len(full) - arr.ndim)), full)

    def conditional_means(self) -> list:
        """``E[X_t | history before X_t]`` as arrays over that history."""
        return [self.px[t] @ self.x_support[t] for t in range(self.T)]

    def orthogonalized_covariates(self) -> list:
        """``X_t - E[X_t | past]`` on the full history grid, one array per period."""
        out = []
        for t, m in enumerate(self.conditional_means()):
            hist = self.history_shape(t)
            xt = self.x_support[t].reshape((1,) * len(hist) + (-1,))
            out.append(self._expand(xt - m[..., None], 2 * t + 1))
        return out

    def treatment_grid(self) -> list:
        full = self.history_shape(self.T)
        out = []
        for t in range(self.T):
            shape = [1] * len(full)
            shape[2 * t + 1] = 2
            out.append(np.broadcast_to(np.arange(2.0).reshape(shape), full))
        return out

    def linear_outcome(self, alpha: float, beta, lam, link: str = "identity") -> "DiscreteScm":
        """Model whose outcome mean is ``alpha + beta'a + lam'x~`` (or its exp)."""
        beta, lam = np.asarray(beta, dtype=float), np.asarray(lam, dtype=float)
        eta = np.full(self.history_shape(self.T), float(alpha))
        for t, (xt, at) in enumerate(zip(self.orthogonalized_covariates(), self.treatment_grid())):
            eta = eta + beta[t] * at + lam[t] * xt
        if link == "identity":
            return self.with_outcome(eta)
        if link == "log":
            return self.with_outcome(np.exp(eta))
        raise ValueError(f"unknown link {link!r}")

    def _law(self, abar=None) -> np.ndarray:
        P = np.ones(())
        for t in range(self.T):
            P = P[..., None] * self.px[t]
            if abar is None:
                q = self.pa[t]
                P = P[..., None] * np.stack([1 - q, q], axis=-1)
            else:
                P = P[..., None] * np.eye(2)[int(abar[t])]
        return P

    def joint(self) -> np.ndarray:
        """Observational probability of every full history."""
        return self._law()

    def population_panel(self) -> tuple:
        """All positive-probability histories as a panel, with their probabilities.

        The outcome column is ``mu``, so weighted fits on this panel are
        population-level fits.
        """
        P = self.joint()
        idx = np.argwhere(P > 0)
        n = len(idx)
        covs = tuple(self.x_support[t][idx[:, 2 * t]][:, None] for t in range(self.T))
        panel = PanelDataset(
            ids=np.array([f"s{i}" for i in range(n)]),
            covariates=covs,
            treatments=idx[:, 1::2].astype(float),
            outcome_kind=OutcomeKind.CONTINUOUS,
            y=self.mu[tuple(idx.T)],
        )
        return panel, P[tuple(idx.T)]

    def simulate_intervened(self, abar, n: int, rng: np.random.Generator) -> np.ndarray:
        """``E[Y | history]`` at ``n`` histories drawn with treatment forced to ``abar``."""
        P = self._law(np.asarray(abar)).ravel()
        cells = rng.choice(P.size, size=n, p=P / P.sum())
        return self.mu.ravel()[cells]


def gformula_discrete(scm: DiscreteScm, abar) -> float:
    """Exact ``sum_x mu(a, x) prod_t p(x_t | x_{<t}, a_{<t})`` with ``A`` forced to ``abar``."""
    abar = np.asarray(abar)
    if abar.shape != (scm.T,) or not np.all(np.isin(abar, (0, 1))):
        raise ValueError(f"treatment path must be {scm.T} entries in {{0, 1}}, got {abar.tolist()}")
    return float(np.sum(scm._law(abar) * scm.mu))


def discrete_location_scm(T: int, x1, eps, coef_x: float, coef_a: float, propensity=(0.0, 1.0, 0.0),
                          intercept: float = 0.0) -> DiscreteScm:
    """Finite-state location model ``X_t = c + coef_x X_{t-1} + coef_a A_{t-1} + eps_t``.

    ``x1`` and ``eps`` are ``(values, probabilities)`` pairs; ``eps`` must
    have mean zero so that ``X~_t = eps_t``.  Treatment follows
    ``P(A_t = 1) = expit(p0 + p_x X_t + p_a A_{t-1})`` with
    ``propensity = (p0, p_x, p_a)``.  The outcome table is zero; use
    :meth:`DiscreteScm.linear_outcome`.
    """
    e_val, e_p = (np.asarray(v, dtype=float) for v in eps)
    if abs(e_p @ e_val) > 1e-12:
        raise ConfigError("location noise must have mean zero")
    p0, p_x, p_a = propensity
    supports = [np.asarray(x1[0], dtype=float)]
    for t in range(1, T):
        prev = supports[-1]
        cand = intercept + coef_x * prev[:, None, None] + coef_a * np.array([0.0, 1.0])[None, :, None] + e_val
        supports.append(np.unique(cand))
    px, pa = [], []
    for t in range(T):
        hist_sizes = []
        for s in range(t):
            hist_sizes += [len(supports[s]), 2]
        if t == 0:
            table = np.asarray(x1[1], dtype=float)
        else:
            table = np.zeros(tuple(hist_sizes) + (len(supports[t]),))
            for h in itertools.product(*(range(k) for k in hist_sizes)):
                x_prev, a_prev = supports[t - 1][h[-2]], h[-1]
                centre = intercept + coef_x * x_prev + coef_a * a_prev
                pos = np.searchsorted(supports[t], centre + e_val)
                np.add.at(table[h], pos, e_p)
        px.append(table)
        xt = supports[t].reshape((1,) * len(hist_sizes) + (-1,))
        if t == 0:
            a_prev = 0.0
        else:
            shape = [1] * (len(hist_sizes) + 1)
            shape[len(hist_sizes) - 1] = 2
            a_prev = np.arange(2.0).reshape(shape)
        q = expit(p0 + p_x * xt + p_a * a_prev)
        pa.append(np.broadcast_to(q, tuple(hist_sizes) + (len(supports[t]),)).copy())
    shape = ()
    for s in supports:
        shape += (len(s), 2)
    return DiscreteScm(tuple(supports), tuple(px), tuple(pa), np.zeros(shape))


# ---------------------------------------------------------------------------
# Monte Carlo g-formula
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MonteCarloEstimate:
    estimate: np.ndarray | float
    mc_se: np.ndarray | float
    n: int
    times: np.ndarray | None = None


def gformula_monte_carlo(model, abar, n: int, seed: int, times=None, chunk_size: int = MC_CHUNK) -> MonteCarloEstimate:
    """Simulate ``n`` trajectories with treatment forced to ``abar``.

    ``model.simulate_intervened(abar, m, rng)`` must return ``m`` outcomes.
    Returns the mean outcome, or with ``times`` the empirical survival
    curve ``P(Y >= t)``, and plug-in Monte Carlo standard errors.  Draws
    are made in fixed-size chunks from named substreams, so the result
    depends only on ``(seed, n, chunk_size)``.
    """
    if n <= 0:
        raise ValueError("Monte Carlo sample size must be positive")
    times = None if times is None else np.asarray(times, dtype=float)
    n_chunks = -(-n // chunk_size)
    s1 = s2 = 0.0
    for k in range(n_chunks):
        m = min(chunk_size, n - k * chunk_size)
        rng = np.random.default_rng(seed_sequence(seed, "mc", k))
        y = np.asarray(model.simulate_intervened(abar, m, rng), dtype=float)
        v = y if times is None else (y[:, None] >= times[None, :]).astype(float)
        s1 = s1 + v.sum(axis=0)
        s2 = s2 + (v ** 2).sum(axis=0)
    mean = s1 / n
    var = np.maximum(s2 / n - mean ** 2, 0.0) * n / max(n - 1, 1)
    se = np.sqrt(var / n)
    if times is None:
        return MonteCarloEstimate(float(mean), float(se), n)
    return MonteCarloEstimate(mean, se, n, times)


# ---------------------------------------------------------------------------
# Gaussian location models with a known interventional law
# ---------------------------------------------------------------------------

LOCATION_OUTCOMES = ("linear", "loglinear", "probit", "cox")


@dataclass(frozen=True)
class GaussianLocationScm:
    """``X_t = gamma_a A_{t-1} + gamma_x X_{t-1} + eps_t`` with ``eps_t ~ N(0, sigma_t^2)``.

    Observational treatment is ``A_t ~ Bernoulli(expit(kappa X_t))``.  With
    ``eta = alpha + beta'A + lam'eps`` the outcome is ``eta + N(0, 1)``
    (linear), ``Poisson(exp eta)`` (loglinear), ``1[eta + N(0, 1) > 0]``
    (probit) or exponential with rate ``h0 exp(eta - alpha)`` (cox,
    administratively censored at ``censor_time`` if set).
    """

    outcome: str
    beta: tuple
    lam: tuple
    sigmas: tuple
    alpha: float = 0.0
    gamma_a: float = 0.5
    gamma_x: float = 0.5
    kappa: float = 1.0
    h0: float = 0.1
    censor_time: float | None = None

    def __post_init__(self):
        if self.outcome not in LOCATION_OUTCOMES:
            raise ConfigError(f"unknown outcome model {self.outcome!r}")
        for name in ("beta", "lam", "sigmas"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not len(self.beta) == len(self.lam) == len(self.sigmas) >= 1:
            raise ConfigError("beta, lam and sigmas need one entry per period")
        if any(s < 0 for s in self.sigmas):
            raise ConfigError("sigmas must be nonnegative")

    @property
    def T(self) -> int:
        return len(self.beta)

    @property
    def sigma2(self) -> float:
        return float(np.sum(np.square(self.lam) * np.square(self.sigmas)))

    def _draw(self, n, rng, abar=None):
        T = self.T
        X = np.empty((n, T))
        A = np.empty((n, T))
        eps = rng.standard_normal((n, T)) * np.asarray(self.sigmas)
        for t in range(T):
            X[:, t] = eps[:, t] if t == 0 else self.gamma_a * A[:, t - 1] + self.gamma_x * X[:, t - 1] + eps[:, t]
            if abar is None:
                A[:, t] = (rng.random(n) < expit(self.kappa * X[:, t])).astype(float)
            else:
                A[:, t] = abar[t]
        lin = A @ np.asarray(self.beta) + eps @ np.asarray(self.lam)
        noise = rng.standard_normal(n) if self.outcome in ("linear", "probit") else None
        if self.outcome == "linear":
            y = self.alpha + lin + noise
        elif self.outcome == "probit":
            y = (self.alpha + lin + noise > 0).astype(float)
        elif self.outcome == "loglinear":
            y = rng.poisson(np.exp(self.alpha + lin)).astype(float)
        else:
            y = rng.exponential(size=n) / (self.h0 * np.exp(lin))
        return X, A, y

    def simulate_intervened(self, abar, n: int, rng: np.random.Generator) -> np.ndarray:
        abar = np.asarray(abar, dtype=float)
        if abar.shape != (self.T,):
            raise ValueError(f"treatment path needs {self.T} entries")
        return self._draw(n, rng, abar)[2]

    def simulate(self, n: int, rng: np.random.Generator) -> PanelDataset:
        X, A, y = self._draw(n, rng)
        kind = {"linear": OutcomeKind.CONTINUOUS, "loglinear": OutcomeKind.COUNT,
                "probit": OutcomeKind.BINARY, "cox": OutcomeKind.SURVIVAL}[self.outcome]
        event = None
        if self.outcome == "cox":
            event = np.ones(n)
            if self.censor_time is not None:
                event = (y <= self.censor_time).astype(float)
                y = np.minimum(y, self.censor_time)
        return PanelDataset(
            ids=np.array([str(i) for i in range(n)]),
            covariates=tuple(X[:, [t]] for t in range(self.T)),
            treatments=A,
            outcome_kind=kind,
            y=y,
            event=event,
            time_grid=np.arange(self.T, dtype=float) if self.outcome == "cox" else None,
        )

    def causal_mean(self, abar) -> float:
        """Closed-form ``E[Y^abar]`` (non-survival outcomes)."""
        lin = self.alpha + float(np.dot(self.beta, abar))
        if self.outcome == "linear":
            return lin
        if self.outcome == "loglinear":
            return float(np.exp(lin + 0.5 * self.sigma2))
        if self.outcome == "probit":
            return float(ndtr(lin / np.sqrt(1 + self.sigma2)))
        raise ValueError("use causal_survival for the Cox model")

    def causal_survival(self, abar, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return frailty_survival(self.h0 * times * np.exp(float(np.dot(self.beta, abar))), self.sigma2)


# ---------------------------------------------------------------------------
# logistic outcome marginalized over a Gaussian covariate term
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LogisticMarginal:
    eta: np.ndarray              # beta'a at each grid point
    curve: np.ndarray            # E expit(eta + S), S ~ N(0, sigma2)
    sigma2: float
    probit_scale: float          # best c in Phi(c * eta)
    probit_curve: np.ndarray
    sup_distance: float          # sup over eta of |curve - best probit|
    eval_grid: np.ndarray = field(repr=False, default=None)


def logistic_gaussian_cdf(eta, sigma2: float, n_nodes: int = LOGISTIC_GH_NODES) -> np.ndarray:
    """``P(L - S <= eta)`` for logistic ``L`` and independent ``S ~ N(0, sigma2)``."""
    eta = np.asarray(eta, dtype=float)
    if sigma2 <= 0:
        return expit(eta)
    x, w = hermgauss(n_nodes)
    return expit(eta[..., None] + np.sqrt(2 * sigma2) * x) @ w / np.sqrt(np.pi)


def marginalize_logistic(beta, lam, sigmas, abar_grid, n_eval: int = 2001) -> LogisticMarginal:
    """Marginal treatment curve of a logistic outcome model and its probit fit.

    ``sigma^2 = sum lam_t^2 sigma_t^2``.  The best probit ``Phi(c eta)`` is
    the minimax fit over a dense ``eta`` grid covering both tails; its
    sup-distance is reported.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    grid = np.asarray(abar_grid, dtype=float)
    grid = grid.reshape(len(grid), -1)
    if grid.shape[1] != len(beta):
        raise ValueError("each grid point needs one entry per coefficient")
    sigma2 = float(np.sum(np.square(lam) * np.square(sigmas)))
    eta = grid @ beta
    curve = logistic_gaussian_cdf(eta, sigma2)

    half = 12.0 * np.sqrt(sigma2 + np.pi ** 2 / 3)
    z = np.linspace(-half, half, n_eval)
    target = logistic_gaussian_cdf(z, sigma2)

    def sup_dist(log_c):
        return float(np.max(np.abs(target - ndtr(np.exp(log_c) * z))))

    c0 = np.log(1.0 / np.sqrt(sigma2 + 1.7 ** 2))
    res = minimize_scalar(sup_dist, bounds=(c0 - 1.5, c0 + 1.5), method="bounded",
                          options={"xatol": 1e-10})
    c = float(np.exp(res.x))
    return LogisticMarginal(eta, curve, sigma2, c, ndtr(c * eta), float(res.fun), z)
