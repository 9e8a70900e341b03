"""
Mesh weights on a one-dimensional Gaussian chain
================================================

Simulate a small mesh, then estimate a one-step conditional expectation
from a state that is *not* on the mesh. The estimate reuses the mesh's next
states, reweighted by a likelihood ratio whose denominator leaves the
current path out.
"""

import numpy as np

from meshmdp import GaussianShiftKernel, TrajectoryMesh, mesh_expectation, precompute_denominators
from meshmdp.mdp import simulate_paths
from meshmdp.oracles import gaussian_expectation_1d

# 20 steps of N(0, 0.02) noise, every path driven by the zero control
kernel = GaussianShiftKernel((np.sqrt(0.02),) * 20, 1)
controls = np.zeros((20, 1))

f = lambda y: np.cos(3 * y[..., 0])  # any bounded test function

# the question: E[f(S_6) | S_5 = 0.1, action 0.05]
h, x, a = 5, np.array([0.1]), np.array([0.05])
exact = gaussian_expectation_1d(lambda y: f(y[:, None]), 0.15, kernel.sigma(h))
print(f"quadrature target: {exact:.6f}")

for N in (50, 500, 5000):
    states = simulate_paths(kernel, controls, [0.0], N, seed=1)
    mesh = TrajectoryMesh(states, controls, np.zeros(1), 1)
    denoms = precompute_denominators(mesh, kernel, h)
    est, w = mesh_expectation(x, a, h, f(states[:, h + 1]), mesh, kernel, denoms)
    # effective sample size tells how many paths really carry the estimate
    ess = 1.0 / np.sum(w.weights**2)
    print(f"N={N:5d}  estimate={est:.6f}  error={est - exact:+.2e}  ESS={ess:7.1f}  weights sum={w.weights.sum():.15f}")

# Constant functions come back exactly, whatever the state and action.
est, _ = mesh_expectation([2.0], [0.0], h, np.full(N, 4.2), mesh, kernel, denoms)
print(f"E[4.2] from a far-away state: {est!r}")
