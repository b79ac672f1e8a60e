"""Penalized maximum likelihood variable selection for spatial linear models."""

from .covariance import CovarianceSpec, SiteSet, TaperSpec, pairwise_distances
from .data import SpatialDataset
from .estimators import (
    FitResult,
    OptimizerConfig,
    PenaltySpec,
    fit_baseline_iid,
    fit_mle,
    fit_ols,
    fit_ose,
    fit_pmle,
    scad_deriv,
    scad_penalty,
    weighted_lasso,
)
from .exceptions import (
    DataError,
    DegenerateSites,
    GeoSelectError,
    InvalidParameter,
    NonConvergence,
    NotPositiveDefinite,
    RankDeficientDesign,
    TuningFailed,
)
from .likelihood import LikelihoodVariant, ModelState, information, loglik, profile_sigma2, score_theta
from .simulation import ScenarioSpec, run_scenario
from .tuning import LambdaGrid, tune_lambda

__version__ = "0.1.0"
