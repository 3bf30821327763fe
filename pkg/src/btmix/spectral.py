"""Rank-r denoising, user clustering, and misclustering metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from scipy.sparse.linalg import ArpackNoConvergence, svds

__all__ = [
    "ConvergenceError",
    "LowRankFactors",
    "Clustering",
    "ClusteringParams",
    "truncated_svd",
    "default_tau",
    "threshold_cluster",
    "kmeans_cluster",
    "farthest_first",
    "cluster_rows",
    "misclustering_permutation",
    "best_matching",
    "misclustering_majority",
    "DENSE_SVD_LIMIT",
    "BRUTE_FORCE_MAX_R",
]

DENSE_SVD_LIMIT = 64
BRUTE_FORCE_MAX_R = 8


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class LowRankFactors:
    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return self.singular_values.size

    def embedding(self) -> np.ndarray:
        """Row coordinates ``left * sigma``; isometric to the rows of :meth:`reconstruct`."""
        return self.left * self.singular_values

    def reconstruct(self) -> np.ndarray:
        return self.embedding() @ self.right.T


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Largest-magnitude entry of each right vector made positive, for reproducible output.
    idx = np.argmax(np.abs(Vt), axis=1)
    signs = np.sign(Vt[np.arange(Vt.shape[0]), idx])
    signs[signs == 0] = 1.0
    return U * signs, Vt * signs[:, None]


def truncated_svd(S, r: int, *, tol: float = 1e-10, maxiter: int | None = None) -> LowRankFactors:
    """Top-``r`` singular triplets of a dense or sparse matrix.

    Small problems (``min(n, m) <= 64``) use a dense SVD; larger ones use
    implicitly restarted Lanczos (ARPACK) with a fixed starting vector.
    """
    n, m = S.shape
    if not 1 <= r <= min(n, m):
        raise ValueError(f"rank r={r} out of range [1, {min(n, m)}]")
    small = min(n, m)
    if small <= DENSE_SVD_LIMIT or r >= small - 1:
        dense = S.toarray() if sp.issparse(S) else np.asarray(S, dtype=float)
        U, s, Vt = np.linalg.svd(dense, full_matrices=False)
        U, s, Vt = U[:, :r], s[:r], Vt[:r]
    else:
        op = S.astype(float) if sp.issparse(S) else np.asarray(S, dtype=float)
        v0 = np.random.default_rng(0x5EED).standard_normal(small)
        try:
            U, s, Vt = svds(op, k=r, tol=tol, maxiter=maxiter, v0=v0, solver="arpack")
        except ArpackNoConvergence as exc:
            raise ConvergenceError(f"truncated SVD did not converge: {exc}") from exc
        order = np.argsort(s)[::-1]
        U, s, Vt = U[:, order], s[order], Vt[order]
    U, Vt = _fix_signs(U, Vt)
    return LowRankFactors(U, s, Vt.T)


def default_tau(m: int, epsilon: float, c: float = 1.0) -> float:
    """Clustering radius ``c (1 - eps) m / sqrt(log m)``."""
    if m < 3:
        raise ValueError("default threshold needs m >= 3")
    return c * (1.0 - epsilon) * m / math.sqrt(math.log(m))


@dataclass(frozen=True)
class ClusteringParams:
    r: int
    method: str = "kmeans"
    tau: float | None = None
    tau_constant: float = 1.0
    kmeans_max_iters: int = 300
    kmeans_tol: float = 1e-10

    def __post_init__(self) -> None:
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.method not in ("kmeans", "threshold"):
            raise ValueError(f"unknown clustering method {self.method!r}")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.tau_constant <= 0:
            raise ValueError("tau_constant must be positive")
        if self.kmeans_max_iters < 1 or self.kmeans_tol < 0:
            raise ValueError("invalid K-means settings")

    def resolve_tau(self, m: int, epsilon: float) -> float:
        return self.tau if self.tau is not None else default_tau(m, epsilon, self.tau_constant)


@dataclass(frozen=True)
class Clustering:
    labels: np.ndarray
    r: int
    method: str
    pivots: list[int] = field(default_factory=list)
    centers: np.ndarray | None = None
    empty_clusters: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    iterations: int = 0

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.r)

    def to_csv(self) -> str:
        return "user_id,label\n" + "".join(f"{u},{int(k)}\n" for u, k in enumerate(self.labels))


def _sqdist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=-1)


def threshold_cluster(rows: np.ndarray, r: int, tau: float, rng: np.random.Generator) -> Clustering:
    """Sequential pivot clustering with radius ``tau``.

    Each round picks a uniformly random unclustered pivot and claims every
    unclustered row within ``tau`` of it.  Rows still unclustered after ``r``
    rounds join the cluster of their nearest pivot.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    X = np.asarray(rows, dtype=float)
    n = X.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    pivots: list[int] = []
    empty: list[int] = []
    for k in range(r):
        cand = np.flatnonzero(labels < 0)
        if cand.size == 0:
            empty.append(k)
            continue
        p = int(rng.choice(cand))
        pivots.append(p)
        near = np.linalg.norm(X[cand] - X[p], axis=1) <= tau
        labels[cand[near]] = k
    rest = np.flatnonzero(labels < 0)
    if rest.size:
        owners = labels[pivots]
        d = _sqdist(X[rest], X[pivots])
        labels[rest] = owners[np.argmin(d, axis=1)]
    return Clustering(labels, r, "threshold", pivots=pivots, empty_clusters=empty)


def farthest_first(X: np.ndarray, r: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``r`` seed rows: a random first row, then repeatedly the row farthest from all seeds.

    Ties go to the lowest row index.
    """
    n = X.shape[0]
    seeds = [int(rng.integers(n))]
    mind = ((X - X[seeds[0]]) ** 2).sum(axis=1)
    for _ in range(1, r):
        nxt = int(np.argmax(mind))
        seeds.append(nxt)
        mind = np.minimum(mind, ((X - X[nxt]) ** 2).sum(axis=1))
    return np.array(seeds, dtype=np.int64)


def kmeans_cluster(
    rows: np.ndarray,
    r: int,
    rng: np.random.Generator,
    *,
    max_iters: int = 300,
    tol: float = 1e-10,
) -> Clustering:
    """Lloyd's algorithm from farthest-first seeds.

    Stops when no center moves more than ``tol`` or after ``max_iters``
    iterations.  An empty cluster is re-seeded at the row farthest from its
    current center.
    """
    X = np.asarray(rows, dtype=float)
    n = X.shape[0]
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    seeds = farthest_first(X, r, rng)
    centers = X[seeds].copy()
    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    it = 0
    for it in range(1, max_iters + 1):
        d = _sqdist(X, centers)
        labels = np.argmin(d, axis=1)
        own = d[np.arange(n), labels]
        history.append(float(own.sum()))
        counts = np.bincount(labels, minlength=r)
        for k in np.flatnonzero(counts == 0):
            donor = np.flatnonzero(counts[labels] > 1)
            far = donor[np.argmax(own[donor])]
            counts[labels[far]] -= 1
            labels[far] = k
            own[far] = 0.0
            counts[k] = 1
        new = np.zeros_like(centers)
        np.add.at(new, labels, X)
        new /= counts[:, None]
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift <= tol:
            break
    return Clustering(
        labels, r, "kmeans", pivots=seeds.tolist(), centers=centers, objective=history, iterations=it
    )


def cluster_rows(rows: np.ndarray, params: ClusteringParams, rng: np.random.Generator, *, tau: float | None = None) -> Clustering:
    if params.method == "threshold":
        if tau is None:
            if params.tau is None:
                raise ValueError("threshold clustering needs tau")
            tau = params.tau
        return threshold_cluster(rows, params.r, tau, rng)
    return kmeans_cluster(rows, params.r, rng, max_iters=params.kmeans_max_iters, tol=params.kmeans_tol)


def _labels(x) -> np.ndarray:
    return np.asarray(getattr(x, "labels", x), dtype=np.int64)


def _cost_matrix(truth: np.ndarray, est: np.ndarray, r_est: int | None) -> np.ndarray:
    rt = int(truth.max()) + 1 if truth.size else 1
    re = max(r_est or 0, int(est.max()) + 1 if est.size else 1)
    size = max(rt, re)
    overlap = np.zeros((size, size), dtype=np.int64)
    np.add.at(overlap, (truth, est), 1)
    return overlap.sum(axis=1)[:, None] + overlap.sum(axis=0)[None, :] - 2 * overlap


def best_matching(truth, est) -> tuple[int, np.ndarray]:
    """Minimum total symmetric difference and the matching ``perm[k]`` = estimated cluster for true cluster ``k``.

    Cluster counts may differ; missing clusters count as empty.
    """
    t, e = _labels(truth), _labels(est)
    if t.shape != e.shape:
        raise ValueError(f"label vectors differ in length: {t.size} vs {e.size}")
    cost = _cost_matrix(t, e, getattr(est, "r", None))
    size = cost.shape[0]
    if size <= BRUTE_FORCE_MAX_R:
        best, best_perm = None, None
        for perm in permutations(range(size)):
            c = int(cost[np.arange(size), perm].sum())
            if best is None or c < best:
                best, best_perm = c, perm
        return best, np.array(best_perm)
    rows, cols = linear_sum_assignment(cost)
    return int(cost[rows, cols].sum()), cols


def misclustering_permutation(truth, est) -> int:
    """``min_pi sum_k |C_k symdiff C^_pi(k)|``; each misplaced user counts twice."""
    return best_matching(truth, est)[0]


def misclustering_majority(truth, est) -> float:
    """Fraction of users outside the plurality true cluster of their estimated cluster."""
    t, e = _labels(truth), _labels(est)
    if t.shape != e.shape:
        raise ValueError(f"label vectors differ in length: {t.size} vs {e.size}")
    if t.size == 0:
        return 0.0
    errors = 0
    for k in np.unique(e):
        counts = np.bincount(t[e == k])
        errors += counts.sum() - counts.max()
    return errors / t.size
