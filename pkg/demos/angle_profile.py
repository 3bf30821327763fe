"""How far do expected comparison rows sit from the incidence row space?

For small score spreads the margin tanh(x/2) is nearly linear, so the mean
comparison row is almost exactly a net-win projection.  As the spread grows
the margins saturate into signs and the cosine falls toward the sign-vector
value sqrt(2(m+1)/(3m)).
"""

import numpy as np

from btmix.netwin import angle_profile, linearization_error, sign_vector_cosine

m = 200
b_grid = [0.1, 0.5, 1, 2, 5, 10, 20, 50, 200, 1000]
prof = angle_profile(m, b_grid, trials=10, rng=np.random.default_rng(0))

print(f"m = {m}; sign-vector cosine {sign_vector_cosine(m):.4f}; m -> inf limit {np.sqrt(2 / 3):.4f}\n")
print(f"{'b':>7} {'cosine':>8} {'std':>8} {'|f(b) - b/2|':>13}")
for b, c, s in zip(prof.b_grid, prof.mean_cosine, prof.stddev):
    print(f"{b:7g} {c:8.4f} {s:8.4f} {linearization_error(b):13.4f}")

# At m = 200 a sizable share of pairs still has unsaturated margins at b = 50,
# so the sign-vector value is only approached for much larger spreads.
