"""Net-win projection and the geometry of the complete-graph incidence matrix.

``A`` is the ``m x C(m,2)`` matrix whose column for pair ``(i, j)`` is
``e_i - e_j``.  It is never materialized outside the small-``m`` oracle; the
:class:`IncidenceOperator` applies it by counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np

from .model import ClusterModel, ComparisonDataset, bt_margin, pair_arrays

__all__ = [
    "IncidenceOperator",
    "AngleProfile",
    "net_win",
    "apply_incidence",
    "apply_incidence_transpose",
    "subspace_cosine",
    "sign_vector_cosine",
    "mean_comparison_row",
    "expected_netwin",
    "angle_profile",
    "explicit_svd_oracle",
    "linearization_error",
    "cluster_separation",
    "ORACLE_MAX_M",
]

ORACLE_MAX_M = 16


class IncidenceOperator:
    """Implicit complete-graph incidence matrix on ``m`` items."""

    def __init__(self, m: int):
        if m < 2:
            raise ValueError(f"m must be >= 2, got {m}")
        self.m = int(m)
        self.n_pairs = math.comb(self.m, 2)

    @cached_property
    def _pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return pair_arrays(self.m)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Row vector(s) ``x A``: entry ``(i, j)`` is ``x_i - x_j``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.m:
            raise ValueError(f"expected trailing dimension {self.m}, got {x.shape}")
        I, J = self._pairs
        return x[..., I] - x[..., J]

    def apply_transpose(self, y: np.ndarray) -> np.ndarray:
        """Row vector(s) ``y A^T``: entry ``i`` is net signed weight on item ``i``."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.n_pairs:
            raise ValueError(f"expected trailing dimension {self.n_pairs}, got {y.shape}")
        I, J = self._pairs
        if y.ndim == 1:
            return np.bincount(I, y, self.m) - np.bincount(J, y, self.m)
        flat = y.reshape(-1, self.n_pairs)
        out = np.stack([np.bincount(I, row, self.m) - np.bincount(J, row, self.m) for row in flat])
        return out.reshape(*y.shape[:-1], self.m)

    def dense(self) -> np.ndarray:
        """Materialized ``A`` (oracle mode, ``m <= 16`` only)."""
        if self.m > ORACLE_MAX_M:
            raise ValueError(f"dense incidence matrix only available for m <= {ORACLE_MAX_M}")
        A = np.zeros((self.m, self.n_pairs))
        for col, (i, j) in enumerate(combinations(range(self.m), 2)):
            A[i, col] = 1.0
            A[j, col] = -1.0
        return A


def apply_incidence(op: IncidenceOperator, x: np.ndarray) -> np.ndarray:
    return op.apply(x)


def apply_incidence_transpose(op: IncidenceOperator, y: np.ndarray) -> np.ndarray:
    return op.apply_transpose(y)


def net_win(dataset: ComparisonDataset) -> np.ndarray:
    """``(n, m)`` matrix of per-user wins minus losses for each item, scaled by ``1/sqrt(m)``."""
    n, m = dataset.n, dataset.m
    users = dataset.users()
    w = dataset.outcome.astype(float)
    S = np.bincount(users * m + dataset.first, w, n * m) - np.bincount(users * m + dataset.second, w, n * m)
    return S.reshape(n, m) / math.sqrt(m)


def subspace_cosine(op: IncidenceOperator, row: np.ndarray) -> float:
    """Cosine of the angle between a length-``C(m,2)`` row and the row space of ``A``.

    Uses ``||row V||^2 = ||A row^T||^2 / m`` so no factorization is needed.
    """
    row = np.asarray(row, dtype=float)
    norm = np.linalg.norm(row)
    if norm == 0:
        raise ValueError("angle undefined for the zero vector")
    proj = np.linalg.norm(op.apply_transpose(row)) / math.sqrt(op.m)
    return float(min(1.0, proj / norm))


def sign_vector_cosine(m: int) -> float:
    """Closed-form cosine for the sign pattern of any score vector with distinct entries."""
    return math.sqrt(2.0 * (m + 1) / (3.0 * m))


def mean_comparison_row(theta: np.ndarray, epsilon: float) -> np.ndarray:
    """Expected comparison row of a user with scores ``theta``."""
    theta = np.asarray(theta, dtype=float)
    I, J = pair_arrays(theta.size)
    return (1.0 - epsilon) * bt_margin(theta[I] - theta[J])


def expected_netwin(scores: np.ndarray, epsilon: float, *, split: bool = True) -> np.ndarray:
    """Expected net-win rows for each score vector (row) in ``scores``.

    With ``split=True`` the rows correspond to the first half of a sample
    split, whose observation rate is ``(1 - epsilon)/2``.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    m = scores.shape[1]
    op = IncidenceOperator(m)
    factor = 0.5 if split else 1.0
    out = np.empty_like(scores)
    for k, theta in enumerate(scores):
        out[k] = op.apply_transpose(factor * mean_comparison_row(theta, epsilon))
    return out / math.sqrt(m)


@dataclass(frozen=True)
class AngleProfile:
    b_grid: list[float]
    mean_cosine: list[float]
    stddev: list[float]
    trials: int

    def to_csv(self) -> str:
        lines = ["b,mean_cosine,stddev,trials"]
        for b, c, s in zip(self.b_grid, self.mean_cosine, self.stddev):
            lines.append(f"{b!r},{c:.10f},{s:.10f},{self.trials}")
        return "\n".join(lines) + "\n"


def angle_profile(m: int, b_grid: Sequence[float], trials: int, rng: np.random.Generator) -> AngleProfile:
    """Mean cosine between expected comparison rows and the row space of ``A``, per spread ``b``.

    Erasure only rescales the expected row, so it is omitted.
    """
    if m < 2 or trials < 1:
        raise ValueError("need m >= 2 and trials >= 1")
    op = IncidenceOperator(m)
    means, stds = [], []
    for b in b_grid:
        if b <= 0:
            raise ValueError("b must be positive for the angle to be defined")
        cos = np.empty(trials)
        for t in range(trials):
            raw = rng.uniform(0.0, b, size=m)
            cos[t] = subspace_cosine(op, mean_comparison_row(raw - raw.mean(), 0.0))
        means.append(float(cos.mean()))
        stds.append(float(cos.std(ddof=1)) if trials > 1 else 0.0)
    return AngleProfile([float(b) for b in b_grid], means, stds, trials)


def explicit_svd_oracle(m: int, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Dense factors ``U`` (``m x (m-1)``) and ``V`` (``C(m,2) x (m-1)``) with ``A = sqrt(m) U V^T``.

    Raises ``AssertionError`` if the factorization does not have the expected
    rank, singular values, or row norms.
    """
    A = IncidenceOperator(m).dense()
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > tol * s[0]))
    assert rank == m - 1, f"rank {rank} != {m - 1}"
    U, s, V = U[:, : m - 1], s[: m - 1], Vt[: m - 1].T
    assert np.allclose(s, math.sqrt(m), rtol=0, atol=tol), f"singular values {s}"
    assert np.allclose(np.linalg.norm(U, axis=1), math.sqrt((m - 1) / m), rtol=0, atol=tol)
    assert np.allclose(np.linalg.norm(V, axis=1), math.sqrt(2 / m), rtol=0, atol=tol)
    return U, V


def linearization_error(b: float) -> float:
    """Largest gap between the comparison margin and its tangent ``x/2`` over ``|x| <= b``."""
    if b < 0:
        raise ValueError("b must be nonnegative")
    return float(abs(bt_margin(b) - b / 2.0))


def cluster_separation(model: ClusterModel, epsilon: float) -> float:
    """Smallest distance between expected net-win rows of distinct clusters (split-sample scale)."""
    if model.r < 2:
        raise ValueError("separation needs at least two clusters")
    centers = expected_netwin(model.scores, epsilon, split=True)
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    return float(dist[np.triu_indices(model.r, k=1)].min())
