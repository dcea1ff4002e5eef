"""Sparse component analysis (SCA) and sparse matrix approximation (SMA).

Both factor a data matrix as ``Z B Y^T`` with orthonormal-ish factors and a
full k x k center, putting an l1 budget on the loadings ``Y`` (and, for SMA,
on ``Z``). Each loading update is polar -> varimax rotation -> soft-threshold.
"""

__version__ = "0.1.0"

from .decomp import (
    FitConfig,
    GammaRangeWarning,
    ScaFit,
    SmaFit,
    SparseCodingFit,
    component_ev,
    diagonal_baseline_pve,
    diagonal_center,
    optimal_center,
    prs,
    pve,
    residual_sq,
    sca,
    sma,
    sparse_coding,
)
from .matcore import RankDeficientError, SvdResult, entrywise_norm, polar, truncated_svd
from .rotate import RotationResult, absmin_rotate, quartimax_criterion, varimax_criterion, varimax_rotate
from .shrink import ShrinkResult, column_deviation, soft_threshold
from .simgen import accuracy, assign_clusters, excess_kurtosis, gen_lowrank, gen_sbm
from .tune import CvResult, FoldPlan, cross_validate, make_folds

__all__ = [
    "FitConfig", "GammaRangeWarning", "ScaFit", "SmaFit", "SparseCodingFit", "component_ev",
    "diagonal_baseline_pve", "diagonal_center", "optimal_center", "prs", "pve", "residual_sq",
    "sca", "sma", "sparse_coding", "RankDeficientError", "SvdResult", "entrywise_norm", "polar",
    "truncated_svd", "RotationResult", "absmin_rotate", "quartimax_criterion", "varimax_criterion",
    "varimax_rotate", "ShrinkResult", "column_deviation", "soft_threshold", "accuracy",
    "assign_clusters", "excess_kurtosis", "gen_lowrank", "gen_sbm", "CvResult", "FoldPlan",
    "cross_validate", "make_folds",
]
