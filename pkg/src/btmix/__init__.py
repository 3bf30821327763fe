"""Clustering and ranking users from pairwise comparisons under a mixture of Bradley-Terry models."""

__version__ = "0.1.0"

from .model import (
    ClusterModel,
    ComparisonDataset,
    SimulationConfig,
    SplitDataset,
    TheoryRangeWarning,
    bt_margin,
    epsilon_for_budget,
    generate_scores,
    sample_comparisons,
    split_sample,
)
from .netwin import IncidenceOperator, net_win
from .spectral import Clustering, ClusteringParams, ConvergenceError, truncated_svd
from .mle import MleConfig, ScoreEstimate, WinCounts, aggregate_wins, solve_mle
from .pipeline import PipelineError, PipelineResult, estimate_num_clusters, run_algorithm1, simulate

__all__ = [
    "ClusterModel",
    "ComparisonDataset",
    "SimulationConfig",
    "SplitDataset",
    "TheoryRangeWarning",
    "bt_margin",
    "epsilon_for_budget",
    "generate_scores",
    "sample_comparisons",
    "split_sample",
    "IncidenceOperator",
    "net_win",
    "Clustering",
    "ClusteringParams",
    "ConvergenceError",
    "truncated_svd",
    "MleConfig",
    "ScoreEstimate",
    "WinCounts",
    "aggregate_wins",
    "solve_mle",
    "PipelineError",
    "PipelineResult",
    "estimate_num_clusters",
    "run_algorithm1",
    "simulate",
]
