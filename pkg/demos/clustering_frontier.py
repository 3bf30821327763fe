"""Budget needed before each clustering method separates the users.

For each method the sweep raises the number of comparisons per user until
the mean misclustered fraction (majority rule) falls below 5%.  Clustering
on the rank-r denoised net-win vectors needs the fewest comparisons; raw
comparison rows, whose erasure noise spreads over all C(m, 2) coordinates,
need the most.
"""

from btmix.experiments import ExperimentGrid, experiment_clustering_frontier

grid = ExperimentGrid(
    m=150,
    n=150,
    b=4.0,
    r_values=(2, 3),
    budgets=(10, 20, 40, 80, 160, 320, 640),
    trials=5,
    threads=4,
)
out = experiment_clustering_frontier(grid)
print(out.tables["frontier"])
print(out.tables["frontier_detail"])
