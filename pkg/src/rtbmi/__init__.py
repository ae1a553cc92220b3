"""Return-to-baseline multiple imputation for longitudinal trial outcomes."""

from .datagen import (
    ArmData,
    ArmSpec,
    MissingnessSpec,
    ScenarioTruth,
    TrialDataset,
    apply_missingness,
    generate_complete,
    generate_trial,
    retention_prob,
    true_rtb_mean,
)
from .imputation import CompletedDataset, MonotoneRegressionImputer, impute_m, impute_once
from .inference import ancova, bootstrap_ci, estimate, expanded_alpha, rubin_pool
from .methods import (
    METHODS,
    DirectMLEstimator,
    ReturnToBaselineImputer,
    bocf,
    direct_ml_estimate,
    impute,
    quan_impute,
    rtb_mean_shift,
    rtb_mean_var_shift,
    tim_impute,
)
from .mvn import CovarianceSpec, MvnDistribution, build_cs_covariance, conditional_mvn

__version__ = "0.1.0"

__all__ = [
    "ArmData",
    "ArmSpec",
    "CompletedDataset",
    "CovarianceSpec",
    "DirectMLEstimator",
    "METHODS",
    "MissingnessSpec",
    "MonotoneRegressionImputer",
    "MvnDistribution",
    "ReturnToBaselineImputer",
    "ScenarioTruth",
    "TrialDataset",
    "ancova",
    "apply_missingness",
    "bocf",
    "bootstrap_ci",
    "build_cs_covariance",
    "conditional_mvn",
    "direct_ml_estimate",
    "estimate",
    "expanded_alpha",
    "generate_complete",
    "generate_trial",
    "impute",
    "impute_m",
    "impute_once",
    "quan_impute",
    "retention_prob",
    "rtb_mean_shift",
    "rtb_mean_var_shift",
    "rubin_pool",
    "tim_impute",
    "true_rtb_mean",
]
