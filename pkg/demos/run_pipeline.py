"""Cluster users and rank items from sparse pairwise comparisons.

Two clusters of 100 users each rank 200 items.  Every user compares about
400 random pairs out of 19900.  Half of the records (in expectation) are
used to cluster users by their projected net-win vectors, the other half to
fit one Bradley-Terry score vector per cluster.
"""

import numpy as np

from btmix import ClusteringParams, SimulationConfig, epsilon_for_budget, run_algorithm1, simulate

m, r, K, b = 200, 2, 100, 4.0
cfg = SimulationConfig(m, r, K, b, epsilon_for_budget(m, 2 * m), seed=1)
model, data = simulate(cfg)
print(f"{cfg.n} users, {m} items, {data.num_records} records ({data.num_records / cfg.n:.0f} per user)")

res = run_algorithm1(data, cfg, ClusteringParams(r), np.random.default_rng(1), model=model)
metrics = res.metrics()
print(f"misclustered fraction: {metrics['misclustered_fraction']:.4f}")
print(f"median per-user relative error: {metrics['median_relative_error']:.4f}")
for k, est in enumerate(res.estimates):
    status = "converged" if est.converged else "not converged"
    print(f"cluster {k}: {est.iterations} MM iterations, {status}, gradient norm {est.final_gradient_norm:.1e}")

# the top items of each cluster, compared with the planted ones
for k in range(r):
    truth = np.argsort(model.scores[k])[::-1][:5]
    est = np.argsort(res.estimates[res.matching[k]].theta_hat)[::-1][:5]
    print(f"cluster {k} top-5 planted {truth.tolist()}, estimated {est.tolist()}")
