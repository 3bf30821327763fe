import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from btmix.model import (
    ClusterModel,
    ComparisonDataset,
    SimulationConfig,
    TheoryRangeWarning,
    bt_margin,
    epsilon_for_budget,
    generate_scores,
    pair_index,
    read_dataset,
    read_model,
    sample_comparisons,
    split_sample,
    win_probability,
    write_dataset,
    write_model,
)

# tanh(1) to 40 digits (mpmath)
TANH_1 = 0.7615941559557648881194582826047935904128


def three_sigma(p, n):
    return 3 * math.sqrt(p * (1 - p) / n)


def test_margin_values():
    assert bt_margin(0.0) == 0.0
    for x in (0.5, 2.0, 10.0):
        assert bt_margin(x) == pytest.approx(-bt_margin(-x), abs=1e-15)
    assert bt_margin(2.0) == pytest.approx(TANH_1, abs=1e-15)


def test_margin_saturates_without_overflow():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert bt_margin(1e4) == 1.0
        assert bt_margin(-1e4) == -1.0
        assert win_probability(800.0, -800.0) == 1.0


def test_win_probability_values():
    assert win_probability(1.7, 1.7) == 0.5
    assert win_probability(101.0, 100.3) == pytest.approx(win_probability(1.0, 0.3), abs=1e-12)
    assert win_probability(math.log(3), 0.0) == pytest.approx(0.75, abs=1e-15)


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50))
def test_shift_invariance(a, b, c):
    assert win_probability(a + c, b + c) == pytest.approx(win_probability(a, b), abs=1e-12)


@given(st.floats(-40, 40))
def test_margin_matches_probability(x):
    assert bt_margin(x) == pytest.approx(2 * win_probability(x, 0.0) - 1, abs=1e-12)


def test_config_validation():
    for bad in (dict(m=1), dict(r=0), dict(K=0), dict(b=-1.0), dict(epsilon=1.0), dict(epsilon=-0.1), dict(seed=-1)):
        kw = dict(m=5, r=1, K=2, b=1.0, epsilon=0.0) | bad
        with pytest.raises(ValueError):
            SimulationConfig(**kw)
    cfg = SimulationConfig(10, 3, 4, 1.0, 0.5)
    assert cfg.n == 12
    assert cfg.expected_comparisons == pytest.approx(22.5)


def test_theory_range_warning():
    with pytest.warns(TheoryRangeWarning):
        SimulationConfig(5, 1, 1, 0.0, 0.0)
    with pytest.warns(TheoryRangeWarning):
        SimulationConfig(5, 1, 1, 10.0, 0.0)


def test_budget_conversion():
    assert epsilon_for_budget(300, 44850) == 0.0
    assert (1 - epsilon_for_budget(200, 400)) * math.comb(200, 2) == pytest.approx(400)
    with pytest.raises(ValueError):
        epsilon_for_budget(10, 0)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(2, 30), st.integers(1, 4), st.integers(1, 5), st.floats(0.01, 5.0), st.integers(0, 2**32)
)
def test_scores_centered_and_bounded(m, r, K, b, seed):
    cfg = SimulationConfig(m, r, K, b, 0.5, seed)
    model = generate_scores(cfg, cfg.rng())
    assert np.all(np.abs(model.scores.sum(axis=1)) < 1e-10)
    assert np.all(np.ptp(model.scores, axis=1) <= b + 1e-12)
    assert np.all(np.bincount(model.labels, minlength=r) == K)
    again = generate_scores(cfg, cfg.rng())
    assert np.array_equal(model.scores, again.scores) and np.array_equal(model.labels, again.labels)


def test_zero_spread_gives_zero_scores():
    with pytest.warns(TheoryRangeWarning):
        cfg = SimulationConfig(6, 2, 3, 0.0, 0.0)
    assert np.all(generate_scores(cfg, cfg.rng()).scores == 0)


def test_labels_are_contiguous_blocks():
    cfg = SimulationConfig(4, 3, 2, 1.0, 0.0)
    assert generate_scores(cfg, cfg.rng()).labels.tolist() == [0, 0, 1, 1, 2, 2]


def test_model_rejects_unequal_clusters():
    with pytest.raises(ValueError):
        ClusterModel(np.zeros((2, 3)), [0, 0, 1])


def test_full_observation_two_items():
    model = ClusterModel(np.zeros((1, 2)), np.zeros(7, dtype=int))
    data = sample_comparisons(model, 0.0, np.random.default_rng(0))
    assert data.counts().tolist() == [1] * 7


def test_equal_scores_give_fair_outcomes():
    m, n = 40, 200
    model = ClusterModel(np.zeros((1, m)), np.zeros(n, dtype=int))
    data = sample_comparisons(model, 0.0, np.random.default_rng(1))
    total = n * math.comb(m, 2)
    assert data.num_records == total
    assert abs(np.mean(data.outcome > 0) - 0.5) < three_sigma(0.5, total)


def test_single_pair_win_rate():
    theta = np.array([[math.log(3) / 2, -math.log(3) / 2]])
    model = ClusterModel(theta, np.zeros(100_000, dtype=int))
    data = sample_comparisons(model, 0.0, np.random.default_rng(2))
    assert abs(np.mean(data.outcome > 0) - 0.75) < three_sigma(0.75, 100_000)


def test_sampling_rate():
    m, K, eps = 100, 10, 0.99
    model = ClusterModel(np.zeros((1, m)), np.zeros(K, dtype=int))
    data = sample_comparisons(model, eps, np.random.default_rng(3))
    p, total = 1 - eps, math.comb(m, 2)
    mean = data.counts().mean()
    assert abs(mean - p * total) < 3 * math.sqrt(total * p * (1 - p) / K)


def test_records_valid_and_sorted():
    cfg = SimulationConfig(12, 2, 5, 2.0, 0.6, 4)
    model = generate_scores(cfg, cfg.rng())
    data = sample_comparisons(model, cfg.epsilon, cfg.rng())
    # the validating constructor re-checks ordering, ranges and duplicates
    ComparisonDataset(data.m, data.indptr, data.first, data.second, data.outcome)
    assert np.all(data.first < data.second)


def test_sampling_is_per_user_stable():
    # a user's records come from its own child stream
    cfg = SimulationConfig(10, 1, 6, 1.0, 0.5)
    model = generate_scores(cfg, cfg.rng())
    data = sample_comparisons(model, 0.5, np.random.default_rng(9))
    again = sample_comparisons(model, 0.5, np.random.default_rng(9))
    assert np.array_equal(data.outcome, again.outcome) and np.array_equal(data.indptr, again.indptr)


def test_pair_index_lexicographic():
    m = 6
    keys = [pair_index(i, j, m) for i in range(m) for j in range(i + 1, m)]
    assert [int(k) for k in keys] == list(range(math.comb(m, 2)))


def test_from_records_rejects_duplicates_and_bad_pairs():
    with pytest.raises(ValueError):
        ComparisonDataset.from_records(3, [[(0, 1, 1), (0, 1, -1)]])
    with pytest.raises(ValueError):
        ComparisonDataset.from_records(3, [[(1, 0, 1)]])
    with pytest.raises(ValueError):
        ComparisonDataset.from_records(3, [[(0, 3, 1)]])
    with pytest.raises(ValueError):
        ComparisonDataset.from_records(3, [[(0, 1, 0)]])


def test_split_of_empty_source():
    split = split_sample(ComparisonDataset.empty(5, 3), 0.5, np.random.default_rng(0))
    assert split.first.num_records == 0 and split.second.num_records == 0
    assert split.first.n == 3


def test_split_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        split_sample(ComparisonDataset.empty(5, 3), 1.0, np.random.default_rng(0))


def _support(data):
    return {(int(u), int(k)): int(o) for u, k, o in zip(data.users(), data.pair_keys(), data.outcome)}


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.0, 0.95))
def test_split_supports_are_subsets(seed, eps):
    cfg = SimulationConfig(8, 2, 3, 2.0, eps, seed)
    model = generate_scores(cfg, cfg.rng())
    data = sample_comparisons(model, eps, cfg.rng())
    split = split_sample(data, eps, np.random.default_rng(seed))
    source = _support(data)
    for part in (split.first, split.second):
        for key, outcome in _support(part).items():
            assert source[key] == outcome


def test_split_frequencies():
    eps, n = 0.9, 10**6
    # one record per user, so users index the support elements
    data = ComparisonDataset(2, np.arange(n + 1), np.zeros(n, int), np.ones(n, int), np.ones(n, int))
    split = split_sample(data, eps, np.random.default_rng(5))
    in1 = np.zeros(n, bool)
    in2 = np.zeros(n, bool)
    in1[split.first.users()] = True
    in2[split.second.users()] = True
    for observed, p in (
        (np.mean(in1 & ~in2), (1 + eps) / 4),
        (np.mean(in2 & ~in1), (1 + eps) / 4),
        (np.mean(in1 & in2), (1 - eps) / 4),
    ):
        assert abs(observed - p) < three_sigma(p, n)


def test_model_roundtrip(tmp_path):
    cfg = SimulationConfig(7, 2, 3, 1.5, 0.25, 11)
    model = generate_scores(cfg, cfg.rng())
    write_model(tmp_path / "model.txt", model, cfg)
    back, cfg2 = read_model(tmp_path / "model.txt")
    assert cfg2 == cfg
    assert np.array_equal(back.scores, model.scores) and np.array_equal(back.labels, model.labels)


def test_dataset_roundtrip_and_format(tmp_path):
    cfg = SimulationConfig(3, 1, 2, 1.0, 0.0, 0)
    data = ComparisonDataset.from_records(3, [[(0, 1, 1), (1, 2, -1), (0, 2, 1)], []])
    write_dataset(tmp_path / "d.txt", data, cfg)
    text = (tmp_path / "d.txt").read_text()
    assert text.splitlines()[0] == "3 1 2 1.0 0.0 0"
    assert text.splitlines()[1:] == ["0 0 1 1", "0 0 2 1", "0 1 2 -1"]
    back, _ = read_dataset(tmp_path / "d.txt")
    assert back.counts().tolist() == [3, 0]
    assert back.user_records(0) == data.user_records(0)
