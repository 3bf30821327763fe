"""Mixed Bradley-Terry model: score generation, comparison sampling, sample splitting.

Comparison data is stored sparsely, one sorted coordinate list per user, with
pairs ``(i, j)`` always satisfying ``i < j``.  An outcome of ``+1`` means the
user preferred ``i`` over ``j``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "SimulationConfig",
    "ClusterModel",
    "ComparisonDataset",
    "SplitDataset",
    "TheoryRangeWarning",
    "bt_margin",
    "win_probability",
    "generate_scores",
    "sample_comparisons",
    "split_sample",
    "pair_index",
    "pair_arrays",
    "epsilon_for_budget",
    "write_model",
    "read_model",
    "write_dataset",
    "read_dataset",
]


class TheoryRangeWarning(UserWarning):
    """Score spread outside the range covered by the clustering guarantees."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SimulationConfig:
    m: int
    r: int
    K: int
    b: float
    epsilon: float
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"m must be an integer >= 2, got {self.m!r}")
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"r must be an integer >= 1, got {self.r!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be an integer >= 1, got {self.K!r}")
        if not np.isfinite(self.b) or self.b < 0:
            raise ValueError(f"b must be finite and >= 0, got {self.b!r}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.b == 0 or self.b > 5:
            warnings.warn(
                f"b={self.b} lies outside (0, 5]; clusters may be unidentifiable (b=0) "
                "or the clustering guarantees do not formally apply",
                TheoryRangeWarning,
                stacklevel=3,
            )

    @property
    def n(self) -> int:
        return self.r * self.K

    @property
    def n_pairs(self) -> int:
        return comb(self.m, 2)

    @property
    def expected_comparisons(self) -> float:
        """Expected number of observed comparisons per user."""
        return (1.0 - self.epsilon) * self.n_pairs

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def epsilon_for_budget(m: int, budget: float) -> float:
    """Erasure probability giving ``budget`` expected comparisons per user."""
    total = comb(m, 2)
    if not 0 < budget <= total:
        raise ValueError(f"budget must lie in (0, {total}], got {budget}")
    return 1.0 - budget / total


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """Ground-truth score vectors (``scores[k]``) and user-to-cluster labels."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        scores = np.array(self.scores, dtype=float, ndmin=2)
        labels = np.array(self.labels, dtype=np.int64).ravel()
        r = scores.shape[0]
        if labels.size and (labels.min() < 0 or labels.max() >= r):
            raise ValueError("labels must lie in [0, r)")
        counts = np.bincount(labels, minlength=r)
        if labels.size and not np.all(counts == counts[0]):
            raise ValueError(f"clusters must have equal sizes, got {counts.tolist()}")
        object.__setattr__(self, "scores", _readonly(scores))
        object.__setattr__(self, "labels", _readonly(labels))

    @property
    def r(self) -> int:
        return self.scores.shape[0]

    @property
    def m(self) -> int:
        return self.scores.shape[1]

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def K(self) -> int:
        return self.n // self.r

    def user_scores(self) -> np.ndarray:
        """``(n, m)`` matrix whose row ``u`` is the score vector of user ``u``."""
        return self.scores[self.labels]


def pair_index(i, j, m: int):
    """Lexicographic column index of pair ``(i, j)``, ``i < j``."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    return i * m - i * (i + 1) // 2 + (j - i - 1)


def pair_arrays(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column item indices of all pairs in lexicographic order."""
    i, j = np.triu_indices(m, k=1)
    return i.astype(np.int64), j.astype(np.int64)


@dataclass(frozen=True, eq=False)
class ComparisonDataset:
    """Per-user sparse comparison records in CSR layout.

    Records of user ``u`` occupy ``indptr[u]:indptr[u+1]`` and are sorted by
    pair index.
    """

    m: int
    indptr: np.ndarray
    first: np.ndarray
    second: np.ndarray
    outcome: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self) -> None:
        indptr = np.asarray(self.indptr, dtype=np.int64)
        first = np.asarray(self.first, dtype=np.int64)
        second = np.asarray(self.second, dtype=np.int64)
        outcome = np.asarray(self.outcome, dtype=np.int8)
        if indptr.ndim != 1 or indptr.size < 1 or indptr[0] != 0:
            raise ValueError("indptr must be a 1-d array starting at 0")
        if not (first.size == second.size == outcome.size == indptr[-1]):
            raise ValueError("record arrays disagree with indptr")
        if self.validate and first.size:
            if np.any(np.diff(indptr) < 0):
                raise ValueError("indptr must be nondecreasing")
            if first.min() < 0 or second.max() >= self.m or np.any(first >= second):
                raise ValueError("records must satisfy 0 <= i < j < m")
            if not np.all(np.abs(outcome) == 1):
                raise ValueError("outcomes must be +1 or -1")
            key = pair_index(first, second, self.m)
            users = np.repeat(np.arange(indptr.size - 1), np.diff(indptr))
            step = np.diff(key)
            same_user = np.diff(users) == 0
            if np.any(step[same_user] <= 0):
                raise ValueError("records within a user must be sorted with no duplicate pairs")
        for name, arr in (("indptr", indptr), ("first", first), ("second", second), ("outcome", outcome)):
            object.__setattr__(self, name, _readonly(arr))

    @classmethod
    def from_records(cls, m: int, records: Sequence[Iterable[tuple[int, int, int]]]) -> "ComparisonDataset":
        """Build from one iterable of ``(i, j, outcome)`` per user; pairs may come in any order."""
        indptr = [0]
        fi, se, oc = [], [], []
        for user in records:
            rows = sorted((int(i), int(j), int(o)) for i, j, o in user)
            for i, j, o in rows:
                fi.append(i)
                se.append(j)
                oc.append(o)
            indptr.append(len(fi))
        return cls(m, np.array(indptr), np.array(fi, dtype=np.int64), np.array(se, dtype=np.int64), np.array(oc))

    @classmethod
    def empty(cls, m: int, n: int) -> "ComparisonDataset":
        z = np.zeros(0, dtype=np.int64)
        return cls(m, np.zeros(n + 1, dtype=np.int64), z, z, z)

    @property
    def n(self) -> int:
        return self.indptr.size - 1

    @property
    def num_records(self) -> int:
        return int(self.indptr[-1])

    def counts(self) -> np.ndarray:
        """Number of records per user."""
        return np.diff(self.indptr)

    def users(self) -> np.ndarray:
        """User index of every record."""
        return np.repeat(np.arange(self.n), self.counts())

    def pair_keys(self) -> np.ndarray:
        return pair_index(self.first, self.second, self.m)

    def user_records(self, u: int) -> list[tuple[int, int, int]]:
        s = slice(self.indptr[u], self.indptr[u + 1])
        return list(zip(self.first[s].tolist(), self.second[s].tolist(), self.outcome[s].tolist()))

    def dense_rows(self) -> np.ndarray:
        """Materialize the ``n x C(m,2)`` matrix of +1/-1/0 entries (small instances only)."""
        out = np.zeros((self.n, comb(self.m, 2)))
        out[self.users(), self.pair_keys()] = self.outcome
        return out

    def subset(self, keep: np.ndarray) -> "ComparisonDataset":
        """Dataset restricted to records where the boolean mask ``keep`` is true."""
        keep = np.asarray(keep, dtype=bool)
        counts = np.bincount(self.users()[keep], minlength=self.n)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return ComparisonDataset(
            self.m, indptr, self.first[keep], self.second[keep], self.outcome[keep], validate=False
        )

    def select_users(self, users: Sequence[int]) -> "ComparisonDataset":
        """Dataset containing only the listed users, renumbered in the given order."""
        users = np.asarray(users, dtype=np.int64)
        starts, stops = self.indptr[users], self.indptr[users + 1]
        idx = np.concatenate([np.arange(a, b) for a, b in zip(starts, stops)]) if users.size else np.zeros(0, np.int64)
        indptr = np.concatenate([[0], np.cumsum(stops - starts)])
        return ComparisonDataset(
            self.m, indptr, self.first[idx], self.second[idx], self.outcome[idx], validate=False
        )


@dataclass(frozen=True)
class SplitDataset:
    first: ComparisonDataset
    second: ComparisonDataset


def bt_margin(x):
    """Expected comparison outcome ``(e^x - 1)/(e^x + 1)``; saturates at +-1."""
    return np.tanh(np.asarray(x, dtype=float) / 2.0)


def win_probability(theta_i, theta_j):
    """Probability that an item with score ``theta_i`` beats one with ``theta_j``."""
    return expit(np.asarray(theta_i, dtype=float) - np.asarray(theta_j, dtype=float))


def generate_scores(config: SimulationConfig, rng: np.random.Generator) -> ClusterModel:
    """Draw ``r`` sum-zero score vectors with entries spread over ``[0, b]``.

    Users ``kK .. (k+1)K - 1`` belong to cluster ``k``.
    """
    raw = rng.uniform(0.0, config.b, size=(config.r, config.m))
    scores = raw - raw.mean(axis=1, keepdims=True)
    labels = np.repeat(np.arange(config.r), config.K)
    return ClusterModel(scores, labels)


def sample_comparisons(
    model: ClusterModel,
    epsilon: float,
    rng: np.random.Generator,
    *,
    user_scores: np.ndarray | None = None,
) -> ComparisonDataset:
    """Sample every pair of every user independently with probability ``1 - epsilon``.

    Each user draws from its own child stream of ``rng``, so a user's records
    do not depend on how many users precede it.  ``user_scores`` overrides the
    per-user score vectors (rows), e.g. for contaminated clusters.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    theta = model.user_scores() if user_scores is None else np.asarray(user_scores, dtype=float)
    n, m = theta.shape
    total = comb(m, 2)
    I, J = pair_arrays(m)

    # Users sharing a score vector share the win-probability table.
    uniq, inverse = np.unique(theta, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    tables = [win_probability(row[I], row[J]) for row in uniq]

    counts = np.zeros(n, dtype=np.int64)
    keys, outs = [], []
    for u, child in enumerate(rng.spawn(n)):
        k = child.binomial(total, 1.0 - epsilon)
        idx = np.sort(child.choice(total, size=k, replace=False)) if k < total else np.arange(total)
        wins = child.random(k) < tables[inverse[u]][idx]
        counts[u] = k
        keys.append(idx)
        outs.append(np.where(wins, 1, -1).astype(np.int8))
    key = np.concatenate(keys) if keys else np.zeros(0, np.int64)
    outcome = np.concatenate(outs) if outs else np.zeros(0, np.int8)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return ComparisonDataset(m, indptr, I[key], J[key], outcome, validate=False)


def split_sample(source: ComparisonDataset, epsilon: float, rng: np.random.Generator) -> SplitDataset:
    """Randomly divide the observed records into two datasets with independent supports.

    Each record goes only to the first output w.p. ``(1+eps)/4``, only to the
    second w.p. ``(1+eps)/4``, to both w.p. ``(1-eps)/4``, and is dropped
    otherwise.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    u = rng.random(source.num_records)
    only = (1.0 + epsilon) / 4.0
    both = (1.0 - epsilon) / 4.0
    in_first = (u < only) | ((u >= 2 * only) & (u < 2 * only + both))
    in_second = u >= only
    in_second &= u < 2 * only + both
    return SplitDataset(source.subset(in_first), source.subset(in_second))


# -- text serialization ------------------------------------------------------
#
# Header line:  m r K b epsilon seed
# Model file:   then r lines "theta k v_0 ... v_{m-1}", then n lines "user_id label".
# Dataset file: then one line "user_id i j outcome" per record, users ascending.
# Integers are written in decimal; reals use Python's shortest round-trip repr.


def _fmt(x: float) -> str:
    return repr(float(x))


def _header(config: SimulationConfig) -> str:
    return f"{config.m} {config.r} {config.K} {_fmt(config.b)} {_fmt(config.epsilon)} {config.seed}\n"


def _parse_header(line: str) -> SimulationConfig:
    parts = line.split()
    if len(parts) != 6:
        raise ValueError(f"malformed header line: {line!r}")
    m, r, K = (int(p) for p in parts[:3])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TheoryRangeWarning)
        return SimulationConfig(m, r, K, float(parts[3]), float(parts[4]), int(parts[5]))


def write_model(path: str | Path, model: ClusterModel, config: SimulationConfig) -> None:
    lines = [_header(config)]
    for k, row in enumerate(model.scores):
        lines.append(f"theta {k} " + " ".join(_fmt(v) for v in row) + "\n")
    lines.extend(f"{u} {int(c)}\n" for u, c in enumerate(model.labels))
    Path(path).write_text("".join(lines))


def read_model(path: str | Path) -> tuple[ClusterModel, SimulationConfig]:
    with open(path) as fh:
        config = _parse_header(fh.readline())
        scores = np.zeros((config.r, config.m))
        labels = np.full(config.n, -1, dtype=np.int64)
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "theta":
                scores[int(parts[1])] = [float(v) for v in parts[2:]]
            else:
                labels[int(parts[0])] = int(parts[1])
    if np.any(labels < 0):
        raise ValueError(f"{path}: missing user labels")
    return ClusterModel(scores, labels), config


def write_dataset(path: str | Path, dataset: ComparisonDataset, config: SimulationConfig) -> None:
    users = dataset.users()
    body = "".join(
        f"{u} {i} {j} {o}\n"
        for u, i, j, o in zip(users.tolist(), dataset.first.tolist(), dataset.second.tolist(), dataset.outcome.tolist())
    )
    Path(path).write_text(_header(config) + body)


def read_dataset(path: str | Path) -> tuple[ComparisonDataset, SimulationConfig]:
    with open(path) as fh:
        config = _parse_header(fh.readline())
        rows = np.loadtxt(fh, dtype=np.int64, ndmin=2)
    if rows.size == 0:
        return ComparisonDataset.empty(config.m, config.n), config
    users = rows[:, 0]
    if users.min() < 0 or users.max() >= config.n:
        raise ValueError(f"{path}: user id outside [0, {config.n})")
    order = np.lexsort((pair_index(rows[:, 1], rows[:, 2], config.m), users))
    rows = rows[order]
    counts = np.bincount(rows[:, 0], minlength=config.n)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return ComparisonDataset(config.m, indptr, rows[:, 1], rows[:, 2], rows[:, 3]), config
