"""Seeded Monte Carlo experiments behind the angle, clustering-frontier and score-error tables.

Every trial draws from its own generator derived from ``(seed, cell, trial)``
so results do not depend on the number of worker threads.
"""

from __future__ import annotations

import json
import platform
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from math import comb
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
import scipy
import scipy.sparse as sp

from . import __version__
from .model import ComparisonDataset, SimulationConfig, TheoryRangeWarning, epsilon_for_budget
from .netwin import angle_profile, net_win
from .pipeline import estimate_num_clusters, simulate
from .spectral import kmeans_cluster, misclustering_majority, truncated_svd

__all__ = [
    "ExperimentGrid",
    "ExperimentOutput",
    "FRONTIER_ALGORITHMS",
    "trial_rng",
    "comparison_matrix",
    "cluster_with",
    "experiment_angle",
    "experiment_clustering_frontier",
    "experiment_score_error",
    "default_grid",
]

T = TypeVar("T")
R = TypeVar("R")

FRONTIER_ALGORITHMS = ("raw-spectral", "projected-kmeans", "algorithm-1")
OPTIONAL_ALGORITHMS = ("raw-kmeans",)


@dataclass(frozen=True)
class ExperimentGrid:
    """Parameter axes shared by the experiments; each experiment reads the fields it needs."""

    m: int = 200
    n: int = 200
    b: float = 4.0
    b_values: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0)
    r_values: tuple[int, ...] = (2, 4)
    budgets: tuple[float, ...] = ()
    epsilon: float = 0.95
    r_tilde_max: int = 6
    algorithms: tuple[str, ...] = FRONTIER_ALGORITHMS
    success_threshold: float = 0.05
    trials: int = 20
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.m < 2 or self.n < 1:
            raise ValueError("need m >= 2 and n >= 1")
        unknown = set(self.algorithms) - set(FRONTIER_ALGORITHMS) - set(OPTIONAL_ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms: {sorted(unknown)}")


def default_grid(name: str) -> ExperimentGrid:
    """Desk-scale defaults for ``fig1``, ``fig2`` and ``fig3``."""
    if name == "fig1":
        return ExperimentGrid(m=200, trials=20)
    if name == "fig2":
        return ExperimentGrid(
            m=300, n=300, b=4.0, r_values=(2, 4),
            budgets=(10, 15, 20, 30, 40, 60, 80, 120, 160, 240, 320, 480, 640, 960, 1280, 2560),
            trials=20,
        )
    if name == "fig3":
        return ExperimentGrid(m=120, n=120, b=5.0, epsilon=0.95, r_values=(1, 2, 4, 8), r_tilde_max=9, trials=20)
    raise ValueError(f"unknown experiment {name!r}")


@dataclass
class ExperimentOutput:
    name: str
    tables: dict[str, str]
    manifest: dict
    data: dict = field(default_factory=dict, repr=False)

    def manifest_json(self) -> str:
        return json.dumps(self.manifest, indent=2, sort_keys=True, default=str)


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def _map(fn: Callable[[T], R], items: Iterable[T], threads: int) -> list[R]:
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _manifest(name: str, grid: ExperimentGrid, started: float, **extra) -> dict:
    return {
        "experiment": name,
        "grid": asdict(grid),
        "base_seed": grid.seed,
        "versions": {
            "btmix": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": round(time.perf_counter() - started, 3),
        **extra,
    }


def comparison_matrix(dataset: ComparisonDataset) -> sp.csr_matrix:
    """Sparse ``n x C(m,2)`` matrix of +1/-1/0 comparison entries."""
    return sp.csr_matrix(
        (dataset.outcome.astype(float), (dataset.users(), dataset.pair_keys())),
        shape=(dataset.n, comb(dataset.m, 2)),
    )


def _gram_embedding(R: sp.csr_matrix) -> np.ndarray:
    # Rows of U*sqrt(eigvals) from R R^T reproduce all pairwise distances between rows of R.
    G = (R @ R.T).toarray()
    w, U = np.linalg.eigh(G)
    return U * np.sqrt(np.clip(w, 0.0, None))


def cluster_with(algorithm: str, dataset: ComparisonDataset, r: int, rng: np.random.Generator) -> np.ndarray:
    """Cluster labels from one of the frontier algorithms (all use the full comparison data)."""
    if algorithm == "algorithm-1":
        rows = truncated_svd(net_win(dataset), r).embedding()
    elif algorithm == "projected-kmeans":
        rows = net_win(dataset)
    elif algorithm == "raw-spectral":
        rows = truncated_svd(comparison_matrix(dataset), r).embedding()
    elif algorithm == "raw-kmeans":
        rows = _gram_embedding(comparison_matrix(dataset))
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return kmeans_cluster(rows, r, rng).labels


def experiment_angle(grid: ExperimentGrid) -> ExperimentOutput:
    """Mean cosine between expected comparison rows and the incidence row space, per ``b``."""
    started = time.perf_counter()

    def cell(idx: int):
        return angle_profile(grid.m, [grid.b_values[idx]], grid.trials, trial_rng(grid.seed, idx))

    parts = _map(cell, range(len(grid.b_values)), grid.threads)
    lines = ["b,mean_cosine,stddev,trials"]
    for p in parts:
        lines.append(p.to_csv().splitlines()[1])
    csv = "\n".join(lines) + "\n"
    data = {
        "b": [p.b_grid[0] for p in parts],
        "mean_cosine": [p.mean_cosine[0] for p in parts],
        "stddev": [p.stddev[0] for p in parts],
    }
    return ExperimentOutput("fig1", {"angle": csv}, _manifest("fig1", grid, started), data)


def experiment_clustering_frontier(grid: ExperimentGrid) -> ExperimentOutput:
    """Smallest per-user budget at which each algorithm's mean misclustered fraction drops below the threshold.

    Budgets are swept in ascending order; an algorithm stops being evaluated
    at its first success.  Within a cell, all algorithms see the same data.
    """
    started = time.perf_counter()
    budgets = sorted(float(x) for x in grid.budgets)
    if not budgets:
        raise ValueError("frontier experiment needs at least one budget")
    detail = ["r,algorithm,N,epsilon,mean_misclustered,trials"]
    frontier = ["r,algorithm,frontier_N"]
    found: dict[tuple[int, str], float | None] = {}
    curves: dict[tuple[int, str], list[tuple[float, float]]] = {}

    for ri, r in enumerate(grid.r_values):
        if grid.n % r:
            raise ValueError(f"n={grid.n} is not divisible by r={r}")
        active = list(grid.algorithms)
        for bi, budget in enumerate(budgets):
            if not active:
                break
            eps = epsilon_for_budget(grid.m, budget)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TheoryRangeWarning)
                config = SimulationConfig(grid.m, r, grid.n // r, grid.b, eps, grid.seed)

            def trial(t: int, active=tuple(active), config=config, ri=ri, bi=bi) -> list[float]:
                model, data = simulate(config, trial_rng(grid.seed, ri, bi, t))
                out = []
                for alg in active:
                    ai = FRONTIER_ALGORITHMS.index(alg) if alg in FRONTIER_ALGORITHMS else 10
                    labels = cluster_with(alg, data, r, trial_rng(grid.seed, ri, bi, t, 1 + ai))
                    out.append(misclustering_majority(model.labels, labels))
                return out

            errs = np.array(_map(trial, range(grid.trials), grid.threads))
            means = errs.mean(axis=0)
            for alg, mean in zip(list(active), means):
                detail.append(f"{r},{alg},{budget:g},{eps:.10f},{mean:.6f},{grid.trials}")
                curves.setdefault((r, alg), []).append((budget, float(mean)))
                if mean < grid.success_threshold:
                    found[(r, alg)] = budget
                    active.remove(alg)
        for alg in grid.algorithms:
            value = found.get((r, alg))
            frontier.append(f"{r},{alg},{'not reached' if value is None else format(value, 'g')}")

    tables = {"frontier": "\n".join(frontier) + "\n", "frontier_detail": "\n".join(detail) + "\n"}
    data = {"frontier": {f"{r}:{a}": found.get((r, a)) for r in grid.r_values for a in grid.algorithms}, "curves": curves}
    return ExperimentOutput("fig2", tables, _manifest("fig2", grid, started), data)


def experiment_score_error(grid: ExperimentGrid) -> ExperimentOutput:
    """Score error and estimate change as functions of the assumed cluster count.

    For each true ``r`` and each trial, candidate counts ``1..r_tilde_max``
    share one sample split.  ``change`` at ``r_tilde`` compares the
    estimates for ``r_tilde + 1`` and ``r_tilde`` clusters, normalized by the
    true score norm.
    """
    started = time.perf_counter()
    r_tilde = list(range(1, grid.r_tilde_max + 1))
    rows = ["r,r_tilde,mean_relative_error,mean_change,error_argmin_rate,change_argmin_rate,trials"]
    per_r: dict[int, dict[str, np.ndarray]] = {}
    for ri, r in enumerate(grid.r_values):
        if grid.n % r:
            raise ValueError(f"n={grid.n} is not divisible by r={r}")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TheoryRangeWarning)
            config = SimulationConfig(grid.m, r, grid.n // r, grid.b, grid.epsilon, grid.seed)

        def trial(t: int, config=config, ri=ri):
            rng = trial_rng(grid.seed, ri, t)
            model, data = simulate(config, rng)
            est = estimate_num_clusters(data, r_tilde, config, rng, model=model)
            return est.error, est.change_vs_truth, est.change, est.r_hat

        results = _map(trial, range(grid.trials), grid.threads)
        err = np.array([x[0] for x in results])
        chg = np.array([x[1] for x in results])
        rel = np.array([x[2] for x in results])
        r_hat = np.array([x[3] for x in results])
        err_arg = np.array(r_tilde)[np.argmin(err, axis=1)]
        chg_arg = np.array(r_tilde)[np.nanargmin(rel, axis=1)]
        per_r[r] = {"error": err, "change": chg, "change_rel": rel, "r_hat": r_hat, "error_argmin": err_arg}
        for i, rt in enumerate(r_tilde):
            rows.append(
                f"{r},{rt},{err[:, i].mean():.6f},{chg[:, i].mean():.6f},"
                f"{np.mean(err_arg == rt):.4f},{np.mean(chg_arg == rt):.4f},{grid.trials}"
            )
    csv = "\n".join(rows) + "\n"
    return ExperimentOutput("fig3", {"score_error": csv}, _manifest("fig3", grid, started), per_r)


EXPERIMENTS: dict[str, Callable[[ExperimentGrid], ExperimentOutput]] = {
    "fig1": experiment_angle,
    "fig2": experiment_clustering_frontier,
    "fig3": experiment_score_error,
}


def run_experiment(name: str, grid: ExperimentGrid | None = None) -> ExperimentOutput:
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    return EXPERIMENTS[name](grid or default_grid(name))


def summarize(values: Sequence[float]) -> str:
    return ", ".join(f"{v:.4f}" for v in values)
