"""End-to-end clustering and ranking: split, project, cluster, estimate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mle import MleConfig, ScoreEstimate, aggregate_wins, solve_mle, theoretical_rates, uniformity_pvalue
from .model import (
    ClusterModel,
    ComparisonDataset,
    SimulationConfig,
    SplitDataset,
    generate_scores,
    sample_comparisons,
    split_sample,
)
from .netwin import net_win
from .spectral import Clustering, ClusteringParams, LowRankFactors, best_matching, cluster_rows, misclustering_majority, truncated_svd

__all__ = [
    "PipelineError",
    "PipelineResult",
    "ClusterCountEstimate",
    "simulate",
    "cluster_users",
    "estimate_scores",
    "run_algorithm1",
    "estimate_num_clusters",
    "UNIFORMITY_ALPHA",
]

UNIFORMITY_ALPHA = 0.01


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names which one."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause


def simulate(config: SimulationConfig, rng: np.random.Generator | None = None) -> tuple[ClusterModel, ComparisonDataset]:
    """Draw a ground-truth model and its comparison data (seeded from ``config.seed`` by default)."""
    rng = rng if rng is not None else config.rng()
    model = generate_scores(config, rng)
    return model, sample_comparisons(model, config.epsilon, rng)


def cluster_users(
    first: ComparisonDataset,
    params: ClusteringParams,
    epsilon: float,
    rng: np.random.Generator,
) -> tuple[Clustering, LowRankFactors]:
    """Net-win projection, rank-``r`` denoising, and clustering of the denoised rows."""
    S = net_win(first)
    factors = truncated_svd(S, params.r)
    tau = params.resolve_tau(first.m, epsilon) if params.method == "threshold" else None
    # The embedding is isometric to the rows of the rank-r reconstruction.
    return cluster_rows(factors.embedding(), params, rng, tau=tau), factors


def estimate_scores(second: ComparisonDataset, clustering: Clustering, mle_config: MleConfig | None = None) -> list[ScoreEstimate]:
    return [solve_mle(aggregate_wins(second, clustering.members(k)), mle_config) for k in range(clustering.r)]


@dataclass
class PipelineResult:
    clustering: Clustering
    estimates: list[ScoreEstimate]
    user_estimates: np.ndarray
    degenerate: bool
    rates: tuple[float, float] | None = None
    per_user_relative_error: np.ndarray | None = None
    misclustered_count: int | None = None
    misclustered_fraction: float | None = None
    misclustered_majority: float | None = None
    matching: np.ndarray | None = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return all(e.converged for e in self.estimates)

    @property
    def median_relative_error(self) -> float | None:
        if self.per_user_relative_error is None:
            return None
        return float(np.nanmedian(self.per_user_relative_error))

    def metrics(self) -> dict:
        out: dict = {
            "r": self.clustering.r,
            "degenerate": self.degenerate,
            "converged": self.converged,
            "cluster_sizes": self.clustering.sizes().tolist(),
            "empty_clusters": list(self.clustering.empty_clusters),
            "solver": [e.diagnostics() for e in self.estimates],
        }
        if self.rates is not None:
            out["eta1"], out["eta2"] = self.rates
        if self.per_user_relative_error is not None:
            out["misclustered_count"] = self.misclustered_count
            out["misclustered_fraction"] = self.misclustered_fraction
            out["misclustered_majority"] = self.misclustered_majority
            out["median_relative_error"] = self.median_relative_error
        return out


def _rates(config: SimulationConfig) -> tuple[float, float] | None:
    try:
        return theoretical_rates(config)
    except ValueError:
        return None


def run_algorithm1(
    dataset: ComparisonDataset,
    config: SimulationConfig,
    params: ClusteringParams,
    rng: np.random.Generator,
    *,
    model: ClusterModel | None = None,
    mle_config: MleConfig | None = None,
    split: SplitDataset | None = None,
) -> PipelineResult:
    """Split the data, cluster users on the first half, fit one score vector per cluster on the second.

    With a ground-truth ``model``, per-user relative errors and both
    misclustering metrics are filled in.  ``split`` overrides the random
    sample split.
    """
    if dataset.m != config.m or dataset.n != config.n:
        raise PipelineError("input", ValueError(f"dataset is {dataset.n}x{dataset.m}, config expects {config.n}x{config.m}"))
    if model is not None and (model.m != dataset.m or model.n != dataset.n):
        raise PipelineError("input", ValueError("ground truth does not match the dataset dimensions"))
    split_rng, cluster_rng = rng.spawn(2)
    try:
        split = split if split is not None else split_sample(dataset, config.epsilon, split_rng)
    except ValueError as exc:
        raise PipelineError("split", exc) from exc
    try:
        clustering, _ = cluster_users(split.first, params, config.epsilon, cluster_rng)
    except Exception as exc:
        raise PipelineError("cluster", exc) from exc
    try:
        estimates = estimate_scores(split.second, clustering, mle_config)
    except Exception as exc:
        raise PipelineError("estimate", exc) from exc

    theta_hat = np.stack([e.theta_hat for e in estimates])
    result = PipelineResult(
        clustering=clustering,
        estimates=estimates,
        user_estimates=theta_hat[clustering.labels],
        degenerate=split.first.num_records == 0 or split.second.num_records == 0,
        rates=_rates(config),
    )
    if model is not None:
        count, matching = best_matching(model.labels, clustering)
        # User u is judged by the estimate matched to its true cluster, so relabeling the
        # estimated clusters leaves the errors unchanged.
        assigned = matching[model.labels]
        assigned = np.where(assigned < clustering.r, assigned, clustering.labels)
        truth = model.user_scores()
        with np.errstate(invalid="ignore", divide="ignore"):
            result.per_user_relative_error = np.linalg.norm(theta_hat[assigned] - truth, axis=1) / np.linalg.norm(truth, axis=1)
        result.misclustered_count = count
        result.misclustered_fraction = count / (2 * model.n)
        result.misclustered_majority = misclustering_majority(model.labels, clustering)
        result.matching = matching
    return result


@dataclass
class ClusterCountEstimate:
    """Outcome of scanning candidate cluster counts.

    ``change[i]`` is ``||Theta(r_i + 1) - Theta(r_i)|| / ||Theta(r_i)||`` for
    stacked per-user estimates ``Theta``; ``r_hat`` minimizes it.
    """

    r_values: list[int]
    change: np.ndarray
    r_hat: int
    reliable: bool
    uniformity_pvalue: float
    error: np.ndarray | None = None
    change_vs_truth: np.ndarray | None = None
    estimates: dict[int, np.ndarray] = field(default_factory=dict, repr=False)


def estimate_num_clusters(
    dataset: ComparisonDataset,
    r_values: list[int] | range,
    config: SimulationConfig,
    rng: np.random.Generator,
    *,
    model: ClusterModel | None = None,
    mle_config: MleConfig | None = None,
    params: ClusteringParams | None = None,
) -> ClusterCountEstimate:
    """Pick the cluster count after which adding one more cluster changes the estimates least.

    All candidates share one sample split and one clustering seed.  The
    result is flagged unreliable when the pooled data cannot be told apart
    from all-equal scores.
    """
    r_values = sorted(int(r) for r in r_values)
    if not r_values or r_values[0] < 1:
        raise ValueError("candidate cluster counts must be >= 1")
    r_top = r_values[-1] + 1
    if r_top > min(dataset.n, dataset.m):
        raise ValueError(f"largest candidate + 1 = {r_top} exceeds min(n, m)")
    params = params or ClusteringParams(r=1)
    split_rng, cluster_rng = rng.spawn(2)
    split = split_sample(dataset, config.epsilon, split_rng)
    factors = truncated_svd(net_win(split.first), r_top)
    cluster_seed = int(cluster_rng.integers(2**63))

    needed = sorted(set(r_values) | {r + 1 for r in r_values})
    stacked: dict[int, np.ndarray] = {}
    for rt in needed:
        p = ClusteringParams(r=rt, method="kmeans", kmeans_max_iters=params.kmeans_max_iters, kmeans_tol=params.kmeans_tol)
        emb = factors.embedding()[:, :rt]
        clustering = cluster_rows(emb, p, np.random.default_rng(cluster_seed))
        theta_hat = np.stack([e.theta_hat for e in estimate_scores(split.second, clustering, mle_config)])
        stacked[rt] = theta_hat[clustering.labels]

    def ratio(a: np.ndarray, denom: float) -> float:
        return float(np.linalg.norm(a) / denom) if denom > 0 else float("nan")

    change = np.array([ratio(stacked[r + 1] - stacked[r], np.linalg.norm(stacked[r])) for r in r_values])
    r_hat = r_values[int(np.nanargmin(change))] if np.any(np.isfinite(change)) else r_values[0]

    pooled = aggregate_wins(split.second, np.arange(dataset.n))
    pval = uniformity_pvalue(pooled)
    result = ClusterCountEstimate(
        r_values=r_values,
        change=change,
        r_hat=r_hat,
        reliable=pval < UNIFORMITY_ALPHA,
        uniformity_pvalue=pval,
        estimates=stacked,
    )
    if model is not None:
        truth = model.user_scores()
        tnorm = np.linalg.norm(truth)
        result.error = np.array([ratio(stacked[r] - truth, tnorm) for r in r_values])
        result.change_vs_truth = np.array([ratio(stacked[r + 1] - stacked[r], tnorm) for r in r_values])
    return result
