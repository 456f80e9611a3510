"""Named estimator pipelines and the subject-level nonparametric bootstrap."""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .baselines import ipw_msm_fit, naive_fit, stabilized_weights
from .data import PanelDataset
from .errors import BootstrapError, ConfigError, OrthoregError
from .ortho import CausalEstimate, extract_causal, ortho_fit, residualize
from .propensity import PropensitySpec
from .rng import substream

log = logging.getLogger(__name__)

ESTIMATORS = ("ortho", "naive", "ipw_msm")
MAX_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything needed to rerun an estimator on a resampled panel.

    ``family`` is the outcome regression family.  ``cumulative`` adds
    running means of covariates and treatment to Cox designs.  ``history``
    and ``x_family`` control residualization (ortho only).  ``msm``,
    ``msm_baseline``, ``propensity`` and ``truncate`` configure IPW.
    """

    estimator: str = "ortho"
    family: str = "ols"
    cumulative: bool = False
    history: str = "full"
    x_family: str = "ols"
    msm: str = "full"
    msm_baseline: bool = False
    propensity: PropensitySpec = field(default_factory=PropensitySpec)
    truncate: float | None = None
    name: str | None = None

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}; choose from {ESTIMATORS}")
        if isinstance(self.propensity, dict):
            object.__setattr__(self, "propensity", PropensitySpec(**self.propensity))

    @property
    def label(self) -> str:
        return self.name or self.estimator

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown estimator keys {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None


def estimate(cfg: EstimatorConfig, panel: PanelDataset) -> CausalEstimate:
    """Run the full pipeline (nuisance models included) on ``panel``."""
    if cfg.estimator == "ortho":
        op = residualize(panel, cfg.x_family, history=cfg.history)
        return extract_causal(ortho_fit(op, cfg.family, cfg.cumulative), op)
    if cfg.estimator == "naive":
        return naive_fit(panel, cfg.family, cfg.cumulative)
    w = stabilized_weights(panel, cfg.propensity, cfg.truncate)
    return ipw_msm_fit(panel, w, cfg.msm, cfg.family, cfg.msm_baseline)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    names: tuple
    point: np.ndarray
    replicates: np.ndarray      # (B_ok, p)
    level: float
    n_failed: int = 0

    def __post_init__(self):
        if len(self.replicates) < 2:
            raise BootstrapError("need at least two successful replicates")

    @property
    def B(self) -> int:
        return len(self.replicates)

    @property
    def se(self) -> np.ndarray:
        return self.replicates.std(axis=0, ddof=1)

    @property
    def basic_ci(self) -> tuple:
        """``(2 theta - q_{1 - alpha/2}, 2 theta - q_{alpha/2})``."""
        return basic_interval(self.point, self.replicates, self.level)

    @property
    def z_score(self) -> np.ndarray:
        se = self.se
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, self.point / np.where(se > 0, se, 1.0), np.nan)

    def table(self) -> list[dict]:
        lo, hi = self.basic_ci
        return [{"coefficient": nm, "estimate": float(self.point[j]), "se": float(self.se[j]),
                 "z": float(self.z_score[j]), "lower": float(lo[j]), "upper": float(hi[j]),
                 "level": self.level, "B": self.B, "failed": self.n_failed}
                for j, nm in enumerate(self.names)]


def basic_interval(point, replicates, level: float) -> tuple:
    alpha = 1 - level
    q_lo, q_hi = np.quantile(np.asarray(replicates, dtype=float), [alpha / 2, 1 - alpha / 2], axis=0)
    point = np.asarray(point, dtype=float)
    return 2 * point - q_hi, 2 * point - q_lo


def bootstrap(cfg: EstimatorConfig, panel: PanelDataset, B: int = 200, level: float = 0.90, seed: int = 0,
              stream=(), threads: int = 1) -> BootstrapResult:
    """Resample whole subjects with replacement and refit the pipeline ``B`` times.

    Replicate ``b`` draws from ``substream(seed, "bootstrap", *stream, b)``,
    so results do not depend on ``threads``.  Replicates whose fit fails
    are dropped; more than 10% failures raise :class:`BootstrapError`.
    """
    if B < 2:
        raise BootstrapError("B must be at least 2")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if B < 100:
        warnings.warn(f"B = {B} is small for interval estimation", RuntimeWarning, stacklevel=2)
    point = estimate(cfg, panel)
    n = panel.n

    def one(b):
        rng = substream(seed, "bootstrap", *stream, b)
        idx = rng.integers(0, n, n)
        try:
            return estimate(cfg, panel.take(idx)).theta
        except (OrthoregError, ValueError, np.linalg.LinAlgError) as e:
            log.debug("bootstrap replicate %d failed: %s", b, e)
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, range(B)))
    else:
        out = [one(b) for b in range(B)]
    ok = [r for r in out if r is not None]
    failed = B - len(ok)
    if failed > MAX_FAILURE_FRACTION * B:
        raise BootstrapError(f"{failed} of {B} bootstrap replicates failed")
    return BootstrapResult(point.names, point.theta, np.array(ok), level, failed)


def with_interval(est: CausalEstimate, boot: BootstrapResult) -> CausalEstimate:
    """Copy of ``est`` carrying bootstrap standard errors and basic intervals."""
    lo, hi = boot.basic_ci
    interval = (np.minimum(lo, est.theta), np.maximum(hi, est.theta))
    return CausalEstimate(est.theta, est.names, est.estimator, est.family, se=boot.se, interval=interval,
                          level=boot.level, intercept=est.intercept, rescale_sigma2=est.rescale_sigma2)
