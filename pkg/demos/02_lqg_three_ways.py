"""
The d=1 LQG benchmark three ways
================================

The same control problem is valued by the continuous-time closed form, by
dynamic programming on a fine state grid (exact for the discrete problem up
to grid error), and by the stochastic mesh. The greedy mesh policy is then
run forward on fresh noise, which gives an honest (lower-bound) value.
"""

import warnings

import numpy as np

from meshmdp import ActionSet, LqgConfig, backward_solve, build_lqg_spec, evaluate_policy, grid_dp, simulate_mesh
from meshmdp.lqg import lqg_action_set, lqg_reference

cfg = LqgConfig(dim=1, lam=1.0, noise_scale=2.0, action_units="control", n_actions=50)
spec = build_lqg_spec(cfg)

ref = lqg_reference(cfg)
print(f"closed form (MC, 1e4 draws): {ref.value:.4f} +- {ref.std_error:.4f}")

# 201 evenly spaced controls in [-1, 1]; the increment is 2 * sqrt(lam) * delta * m
grid_actions = ActionSet.explicit(cfg.increment_halfwidth * np.linspace(-1, 1, 201)[:, None])
dp = grid_dp(spec, 0.0, grid_actions)
print(f"grid DP, 201 actions:        {dp.value:.4f}  (refinement error {dp.params['refinement_error']:.1e})")

mesh = simulate_mesh(spec, np.zeros((spec.horizon, 1)), [0.0], 500, seed=3)
actions = lqg_action_set(cfg, seed=4)  # zero action plus 50 uniform draws
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    values, policy, cost = backward_solve(mesh, spec, actions)
print(f"mesh, N=500, 51 actions:     {values.root_value:.4f}  ({cost.density_evals:,} density evaluations)")

mean, se = evaluate_policy(spec, mesh, policy, values, 20_000, seed=5)
print(f"greedy policy, forward run:  {mean:.4f} +- {se:.4f}")
