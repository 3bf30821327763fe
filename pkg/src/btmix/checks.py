"""Exact small-instance oracles, run by ``btmix selfcheck``.

Each check pairs a library routine with an independent computation and
returns ``(passed, detail)``.
"""

from __future__ import annotations

import math
from itertools import permutations
from typing import Callable

import numpy as np

from .mle import WinCounts, log_likelihood, solve_mle
from .model import ComparisonDataset
from .netwin import IncidenceOperator, explicit_svd_oracle, net_win, sign_vector_cosine, subspace_cosine
from .spectral import misclustering_permutation

__all__ = ["CHECKS", "run_checks", "grid_search_mle", "brute_force_symdiff", "random_dataset"]

Check = Callable[[], tuple[bool, str]]


def random_dataset(m: int, n: int, rng: np.random.Generator, density: float = 0.5) -> ComparisonDataset:
    records = []
    for _ in range(n):
        row = []
        for i in range(m):
            for j in range(i + 1, m):
                if rng.random() < density:
                    row.append((i, j, 1 if rng.random() < 0.5 else -1))
        records.append(row)
    return ComparisonDataset.from_records(m, records)


def grid_search_mle(counts: WinCounts, step: float = 0.01, span: float = 3.0) -> np.ndarray:
    """Brute-force maximizer over sum-zero ``(a, b, -a-b)`` on a square grid (``m = 3`` only)."""
    if counts.m != 3:
        raise ValueError("grid oracle is for m = 3")
    axis = np.arange(-span, span + step / 2, step)
    a, b = np.meshgrid(axis, axis, indexing="ij")
    G = np.stack([a, b, -a - b], axis=-1)
    W = counts.wins
    ll = np.zeros(a.shape)
    for i in range(3):
        for j in range(3):
            if W[i, j]:
                ll -= W[i, j] * np.logaddexp(0.0, G[..., j] - G[..., i])
    idx = np.unravel_index(np.argmax(ll), ll.shape)
    return G[idx]


def brute_force_symdiff(truth: np.ndarray, est: np.ndarray) -> int:
    r = int(max(truth.max(), est.max())) + 1
    best = None
    for perm in permutations(range(r)):
        total = sum(len(set(np.flatnonzero(truth == k)) ^ set(np.flatnonzero(est == perm[k]))) for k in range(r))
        best = total if best is None else min(best, total)
    return best


def check_sign_cosine() -> tuple[bool, str]:
    worst = 0.0
    for m in (3, 10, 100, 1000):
        op = IncidenceOperator(m)
        theta = np.arange(m, dtype=float)[::-1]
        I, J = np.triu_indices(m, k=1)
        worst = max(worst, abs(subspace_cosine(op, np.sign(theta[I] - theta[J])) - sign_vector_cosine(m)))
    c2 = subspace_cosine(IncidenceOperator(100), np.ones(math.comb(100, 2))) ** 2
    return worst < 1e-9 and abs(c2 - 2 * 101 / 300) < 1e-9, f"max |cos - closed form| = {worst:.2e}; m=100 cos^2 = {c2:.12f}"


def check_incidence_svd() -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    worst = 0.0
    for m in range(3, 13):
        U, V = explicit_svd_oracle(m)
        data = random_dataset(m, 4, rng)
        worst = max(worst, float(np.abs(net_win(data) - data.dense_rows() @ V @ U.T).max()))
    s5 = np.linalg.svd(IncidenceOperator(5).dense(), compute_uv=False)[:4]
    return worst < 1e-9, f"net_win vs R V U^T max diff {worst:.2e}; m=5 singular values {np.round(s5, 6).tolist()}"


def check_operator() -> tuple[bool, str]:
    rng = np.random.default_rng(2)
    worst = 0.0
    for m in (2, 5, 16):
        op = IncidenceOperator(m)
        A = op.dense()
        x, y = rng.standard_normal(m), rng.standard_normal(op.n_pairs)
        worst = max(worst, np.abs(op.apply(x) - x @ A).max(), np.abs(op.apply_transpose(y) - y @ A.T).max())
    return worst < 1e-12, f"implicit vs dense max diff {worst:.2e}"


def check_mle_grid() -> tuple[bool, str]:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        W = np.zeros((3, 3), dtype=np.int64)
        for i in range(3):
            for j in range(i + 1, 3):
                total = int(rng.integers(5, 40))
                W[i, j] = rng.binomial(total, rng.uniform(0.2, 0.8))
                W[j, i] = total - W[i, j]
        counts = WinCounts(W)
        if not np.all((W + W.T)[~np.eye(3, dtype=bool)] >= 5):
            continue
        est = solve_mle(counts)
        grid = grid_search_mle(counts)
        gap = log_likelihood(counts, est.theta_hat) - log_likelihood(counts, grid)
        if est.connected:
            worst = max(worst, float(np.abs(est.theta_hat - grid).max()))
        if gap < -1e-9:
            return False, f"solver likelihood below grid optimum by {-gap:.3e}"
    return worst <= 0.02, f"max |solver - grid| = {worst:.4f}"


def check_mle_pair() -> tuple[bool, str]:
    W = np.array([[0, 7], [3, 0]])
    est = solve_mle(WinCounts(W))
    closed = 0.5 * math.log(7 / 3)
    err = max(abs(est.theta_hat[0] - closed), abs(est.theta_hat[1] + closed))
    return err < 1e-6, f"m=2 closed form error {err:.2e}"


def check_permutation() -> tuple[bool, str]:
    rng = np.random.default_rng(4)
    for _ in range(200):
        n, r = int(rng.integers(1, 13)), int(rng.integers(1, 5))
        t, e = rng.integers(0, r, n), rng.integers(0, r, n)
        if misclustering_permutation(t, e) != brute_force_symdiff(t, e):
            return False, f"mismatch on truth={t.tolist()} est={e.tolist()}"
    return True, "200 random partitions match exhaustive enumeration"


CHECKS: dict[str, Check] = {
    "sign-vector cosine": check_sign_cosine,
    "incidence SVD": check_incidence_svd,
    "implicit operator": check_operator,
    "MLE grid search": check_mle_grid,
    "MLE two items": check_mle_pair,
    "permutation metric": check_permutation,
}


def run_checks() -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing oracle is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results
