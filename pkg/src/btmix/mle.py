"""Bradley-Terry maximum likelihood for a single cluster of users."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import expit, wrightomega
from scipy.stats import chi2

from .model import ComparisonDataset, SimulationConfig

__all__ = [
    "WinCounts",
    "MleConfig",
    "ScoreEstimate",
    "AUTO_RIDGE",
    "aggregate_wins",
    "log_likelihood",
    "gradient",
    "solve_mle",
    "relative_error",
    "theoretical_rates",
    "uniformity_pvalue",
]

AUTO_RIDGE = 1e-3


@dataclass(frozen=True)
class WinCounts:
    """``wins[i, j]`` is the number of times item ``i`` beat item ``j``."""

    wins: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.wins, dtype=np.int64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("wins must be a square matrix")
        if np.any(w < 0) or np.any(np.diag(w) != 0):
            raise ValueError("wins must be nonnegative with a zero diagonal")
        w.setflags(write=False)
        object.__setattr__(self, "wins", w)

    @property
    def m(self) -> int:
        return self.wins.shape[0]

    @property
    def comparisons(self) -> np.ndarray:
        return self.wins + self.wins.T

    @property
    def total(self) -> int:
        return int(self.wins.sum())


@dataclass(frozen=True)
class MleConfig:
    max_iters: int = 10_000
    tol: float | None = None
    ridge: float = 0.0
    box: float | None = None

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol is not None and self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.box is not None and self.box <= 0:
            raise ValueError("box must be positive")

    def resolve_tol(self, total: int) -> float:
        return self.tol if self.tol is not None else 1e-8 * (1 + total)


@dataclass(frozen=True)
class ScoreEstimate:
    theta_hat: np.ndarray
    iterations: int
    final_gradient_norm: float
    connected: bool
    converged: bool = True
    ridge: float = 0.0

    def to_csv(self) -> str:
        return "item,theta_hat\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(self.theta_hat.tolist()))

    def diagnostics(self) -> dict:
        d = asdict(self)
        del d["theta_hat"]
        return d

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics(), indent=2, sort_keys=True)


def aggregate_wins(dataset: ComparisonDataset, members: Sequence[int]) -> WinCounts:
    """Pool the win counts of the given users."""
    m = dataset.m
    members = np.unique(np.asarray(members, dtype=np.int64))
    if members.size and (members[0] < 0 or members[-1] >= dataset.n):
        raise ValueError("member index out of range")
    sub = dataset.select_users(members)
    won = sub.outcome > 0
    winner = np.where(won, sub.first, sub.second)
    loser = np.where(won, sub.second, sub.first)
    wins = np.bincount(winner * m + loser, minlength=m * m).reshape(m, m)
    return WinCounts(wins)


def log_likelihood(counts: WinCounts, gamma: np.ndarray) -> float:
    gamma = np.asarray(gamma, dtype=float)
    i, j = np.nonzero(counts.wins)
    return float(-(counts.wins[i, j] * np.logaddexp(0.0, gamma[j] - gamma[i])).sum())


def gradient(counts: WinCounts, gamma: np.ndarray) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    W = counts.wins.astype(float)
    B = W + W.T
    P = expit(gamma[:, None] - gamma[None, :])
    return W.sum(axis=1) - (B * P).sum(axis=1)


def _well_posed(W: np.ndarray) -> bool:
    # Finite MLE exists iff the directed "beat" graph is strongly connected.
    if W.shape[0] == 1:
        return True
    n_comp, _ = connected_components(csr_matrix(W > 0), directed=True, connection="strong")
    return n_comp == 1


def _mm_step(W: np.ndarray, B: np.ndarray, wins: np.ndarray, gamma: np.ndarray, ridge: float) -> np.ndarray:
    shift = gamma.max()
    p = np.exp(gamma - shift)
    c = (B / (p[:, None] + p[None, :])).sum(axis=1)
    with np.errstate(divide="ignore"):
        log_c = np.log(c) - shift
    if ridge == 0.0:
        with np.errstate(divide="ignore"):
            return np.log(wins) - log_c
    # Exact maximizer of the separable surrogate: c e^g + ridge g = wins.
    z = wins / ridge
    out = z - np.real(wrightomega(log_c - math.log(ridge) + z))
    return np.where(c > 0, out, z)


def _penalized(W: np.ndarray, gamma: np.ndarray, ridge: float) -> float:
    i, j = np.nonzero(W)
    return float(-(W[i, j] * np.logaddexp(0.0, gamma[j] - gamma[i])).sum() - 0.5 * ridge * gamma @ gamma)


def _newton_step(B: np.ndarray, grad: np.ndarray, gamma: np.ndarray, ridge: float) -> np.ndarray:
    P = expit(gamma[:, None] - gamma[None, :])
    weights = B * P * P.T
    lap = np.diag(weights.sum(axis=1)) - weights
    return np.linalg.solve(lap + ridge * np.eye(gamma.size), grad)


def solve_mle(counts: WinCounts, config: MleConfig | None = None) -> ScoreEstimate:
    """Maximize ``L(gamma) - ridge/2 ||gamma||^2`` over sum-zero ``gamma``.

    Well-posed data are fitted by MM iterations.  When the data admit no
    finite maximizer the ridge is raised to at least :data:`AUTO_RIDGE`,
    ``connected`` is reported as ``False``, and the strictly concave
    regularized problem is solved by damped Newton steps instead (MM crawls
    along the nearly flat diverging directions).
    """
    config = config or MleConfig()
    W = counts.wins.astype(float)
    B = W + W.T
    wins = W.sum(axis=1)
    m = counts.m
    connected = _well_posed(counts.wins)
    ridge = config.ridge if connected else max(config.ridge, AUTO_RIDGE)
    tol = config.resolve_tol(counts.total)

    def grad(g: np.ndarray) -> np.ndarray:
        P = expit(g[:, None] - g[None, :])
        return wins - (B * P).sum(axis=1) - ridge * g

    gamma = np.zeros(m)
    g = grad(gamma)
    gnorm = float(np.linalg.norm(g))
    it = 0
    while gnorm >= tol and it < config.max_iters:
        if connected:
            gamma = _mm_step(W, B, wins, gamma, ridge)
        else:
            step = _newton_step(B, g, gamma, ridge)
            base = _penalized(W, gamma, ridge)
            t = 1.0
            while t > 1e-10 and _penalized(W, gamma + t * step, ridge) < base + 0.25 * t * (g @ step):
                t *= 0.5
            gamma = gamma + t * step
        if not np.all(np.isfinite(gamma)):
            bound = config.box if config.box is not None else 50.0
            gamma = np.nan_to_num(gamma, nan=0.0, posinf=bound, neginf=-bound)
        gamma -= gamma.mean()
        if config.box is not None:
            gamma = np.clip(gamma, -config.box, config.box)
            gamma -= gamma.mean()
        it += 1
        g = grad(gamma)
        gnorm = float(np.linalg.norm(g))
    gamma.setflags(write=False)
    return ScoreEstimate(gamma, it, gnorm, connected, converged=gnorm < tol, ridge=ridge)


def relative_error(theta_hat: np.ndarray, theta: np.ndarray) -> float:
    """``||theta_hat - theta|| / ||theta||``; NaN when ``theta`` is zero."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if theta_hat.shape != theta.shape:
        raise ValueError("score vectors differ in length")
    denom = np.linalg.norm(theta)
    if denom == 0:
        return float("nan")
    return float(np.linalg.norm(theta_hat - theta) / denom)


def theoretical_rates(config: SimulationConfig) -> tuple[float, float]:
    """Clustering rate ``eta1`` and estimation rate ``eta2`` (natural logs)."""
    m, n, r, K, eps = config.m, config.n, config.r, config.K, config.epsilon
    if m < 3 or n < 3:
        raise ValueError("rates need m >= 3 and n >= 3")
    if eps >= 1:
        raise ValueError("rates undefined for epsilon = 1")
    eta1 = r * max(m, n) * math.log(m) * math.log(n) / ((1 - eps) * K * m**2)
    eta2 = math.sqrt(math.log(m) / ((1 - eps) * K * m))
    return eta1, eta2


def uniformity_pvalue(counts: WinCounts, estimate: ScoreEstimate | None = None) -> float:
    """Likelihood-ratio p-value of the fitted scores against all-equal scores."""
    if counts.total == 0:
        return 1.0
    estimate = estimate or solve_mle(counts)
    stat = 2.0 * (log_likelihood(counts, estimate.theta_hat) - log_likelihood(counts, np.zeros(counts.m)))
    return float(chi2.sf(max(stat, 0.0), df=counts.m - 1))
