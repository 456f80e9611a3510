"""Orthogonalized regression for time-varying treatments, with baselines and oracles."""
from .baselines import IpwWeights, ipw_msm_fit, naive_fit, stabilized_weights
from .bootstrap import BootstrapResult, EstimatorConfig, bootstrap, estimate
from .data import PanelDataset, PanelSchema, check_positivity, load_panel_csv, write_panel_csv
from .dgp import DgpConfig, simulate
from .errors import (BootstrapError, ConfigError, FamilyMismatchError, MonotoneLikelihoodError,
                     NonIdentifiableError, OrthoregError, PanelFormatError, SeparationError,
                     SingularDesignError)
from .experiments import ExperimentConfig, ExperimentResult, run_experiment
from .ortho import (CausalEstimate, OrthoPanel, extract_causal, marginal_survival, ortho_estimate,
                    ortho_fit, residualize)
from .propensity import PropensitySpec
from .regress import FitResult, fit, fit_cox, fit_glm, fit_ols

__version__ = "0.1.0"
