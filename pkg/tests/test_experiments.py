import csv
import io
import json
from dataclasses import replace

import numpy as np
import pytest

from btmix.experiments import (
    ExperimentGrid,
    cluster_with,
    comparison_matrix,
    default_grid,
    experiment_angle,
    experiment_clustering_frontier,
    experiment_score_error,
    run_experiment,
)
from btmix.model import SimulationConfig
from btmix.pipeline import simulate
from btmix.spectral import misclustering_majority

SMALL_FRONTIER = ExperimentGrid(m=100, n=100, b=4.0, r_values=(2,), budgets=(10, 20, 40, 80, 160, 320), trials=5)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_grid_validation():
    with pytest.raises(ValueError):
        ExperimentGrid(trials=0)
    with pytest.raises(ValueError):
        ExperimentGrid(threads=0)
    with pytest.raises(ValueError):
        ExperimentGrid(algorithms=("magic",))
    with pytest.raises(ValueError):
        default_grid("fig4")
    with pytest.raises(ValueError):
        run_experiment("fig4")


def test_default_grids_use_stated_settings():
    fig3 = default_grid("fig3")
    assert (fig3.m, fig3.n, fig3.b, fig3.epsilon) == (120, 120, 5.0, 0.95)
    fig2 = default_grid("fig2")
    assert fig2.success_threshold == 0.05 and fig2.trials == 20
    assert default_grid("fig1").b_values == (0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0)


def test_angle_single_point():
    out = experiment_angle(ExperimentGrid(m=50, b_values=(0.01,), trials=4))
    table = rows(out.tables["angle"])
    assert len(table) == 1 and float(table[0]["mean_cosine"]) >= 0.999
    assert list(table[0]) == ["b", "mean_cosine", "stddev", "trials"]


def test_angle_row_count_and_determinism():
    grid = ExperimentGrid(m=40, b_values=(0.5, 2.0, 9.0), trials=3, seed=5)
    a = experiment_angle(grid)
    b = experiment_angle(replace(grid, threads=4))
    assert len(rows(a.tables["angle"])) == 3
    assert a.tables == b.tables


def test_manifest_contents():
    out = experiment_angle(ExperimentGrid(m=20, b_values=(1.0,), trials=2, seed=9))
    manifest = json.loads(out.manifest_json())
    assert manifest["base_seed"] == 9 and manifest["experiment"] == "fig1"
    assert {"numpy", "scipy", "btmix", "python"} <= set(manifest["versions"])
    assert manifest["grid"]["trials"] == 2 and "wall_time_s" in manifest


def test_comparison_matrix_matches_dense():
    cfg = SimulationConfig(8, 2, 3, 2.0, 0.4, 0)
    _, data = simulate(cfg)
    assert np.array_equal(comparison_matrix(data).toarray(), data.dense_rows())


@pytest.mark.parametrize("algorithm", ["raw-spectral", "projected-kmeans", "algorithm-1", "raw-kmeans"])
def test_cluster_with_dense_data(algorithm):
    cfg = SimulationConfig(30, 2, 15, 4.0, 0.0, 1)
    model, data = simulate(cfg)
    labels = cluster_with(algorithm, data, 2, np.random.default_rng(0))
    assert misclustering_majority(model.labels, labels) == 0


def test_frontier_single_cluster_is_trivial():
    grid = replace(SMALL_FRONTIER, r_values=(1,), trials=2)
    table = rows(experiment_clustering_frontier(grid).tables["frontier"])
    assert {row["frontier_N"] for row in table} == {"10"}


def test_frontier_not_reached():
    grid = replace(SMALL_FRONTIER, budgets=(5,), trials=2)
    table = rows(experiment_clustering_frontier(grid).tables["frontier"])
    assert all(row["frontier_N"] == "not reached" for row in table)


def test_frontier_monotone_in_budget():
    out = experiment_clustering_frontier(SMALL_FRONTIER)
    for (r, alg), curve in out.data["curves"].items():
        means = [m for _, m in curve]
        # allow one grid step of Monte Carlo noise
        for i in range(2, len(means)):
            assert means[i] <= means[i - 2] + 1e-12, (alg, means)


def test_frontier_stable_when_trials_double():
    budgets = list(SMALL_FRONTIER.budgets)
    a = experiment_clustering_frontier(SMALL_FRONTIER).data["frontier"]
    b = experiment_clustering_frontier(replace(SMALL_FRONTIER, trials=10)).data["frontier"]
    for key in a:
        ia = budgets.index(a[key]) if a[key] else len(budgets)
        ib = budgets.index(b[key]) if b[key] else len(budgets)
        assert abs(ia - ib) <= 1


def test_frontier_thread_determinism():
    grid = replace(SMALL_FRONTIER, budgets=(20, 40), trials=3, algorithms=("algorithm-1", "raw-kmeans"))
    assert experiment_clustering_frontier(grid).tables == experiment_clustering_frontier(replace(grid, threads=3)).tables


def test_frontier_rejects_bad_grids():
    with pytest.raises(ValueError):
        experiment_clustering_frontier(replace(SMALL_FRONTIER, budgets=()))
    with pytest.raises(ValueError):
        experiment_clustering_frontier(replace(SMALL_FRONTIER, r_values=(3,)))


def test_score_error_merged_clusters_hurt():
    grid = ExperimentGrid(m=60, n=60, b=5.0, epsilon=0.8, r_values=(4,), r_tilde_max=5, trials=5, seed=2)
    out = experiment_score_error(grid)
    table = rows(out.tables["score_error"])
    assert len(table) == 5
    err = {int(row["r_tilde"]): float(row["mean_relative_error"]) for row in table}
    assert all(err[rt] > err[4] for rt in (1, 2, 3))
    assert list(table[0]) == [
        "r", "r_tilde", "mean_relative_error", "mean_change", "error_argmin_rate", "change_argmin_rate", "trials",
    ]
