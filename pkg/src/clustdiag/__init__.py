"""Cluster-level leverage, influence and jackknife diagnostics for clustered
linear regression."""

from .bootstrap import BootstrapConfig, BootstrapResult, wcr_ci, wcr_pvalue
from .data import ModelSpec, PreparedDesign, build_design, load_csv, prepare_design
from .diagnostics import (
    ClusterDiagnostics,
    EffectiveClusters,
    alternative_means,
    effective_clusters,
    leverage,
    partial_leverage,
    scaled_variance,
    summarize,
)
from .estimator import ClusterSummary
from .exceptions import (
    ClusterDiagnosticWarning,
    DesignError,
    FilterSyntaxError,
    NestingWarning,
    NotIdentifiedError,
    ZeroedCoefficientWarning,
)
from .jackknife import cv3_direct, cv3_jackknife, cv3j_jackknife, delete_one_betas, jackknife
from .ols import FittedModel, VarianceEstimate, cv1, fit_ols
from .simulation import CaseResult, SimConfig, cluster_sizes, generate_design, run_case

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig", "BootstrapResult", "CaseResult", "ClusterDiagnosticWarning",
    "ClusterDiagnostics", "ClusterSummary", "DesignError", "EffectiveClusters",
    "FilterSyntaxError", "FittedModel", "ModelSpec", "NestingWarning",
    "NotIdentifiedError", "PreparedDesign", "SimConfig", "VarianceEstimate",
    "ZeroedCoefficientWarning", "alternative_means", "build_design", "cluster_sizes",
    "cv1", "cv3_direct", "cv3_jackknife", "cv3j_jackknife", "delete_one_betas",
    "effective_clusters", "fit_ols", "generate_design", "jackknife", "leverage",
    "load_csv", "partial_leverage", "prepare_design", "run_case", "scaled_variance",
    "summarize", "wcr_ci", "wcr_pvalue",
]
