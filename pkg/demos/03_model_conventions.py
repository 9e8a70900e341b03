"""
Which discrete problem matches the closed form?
===============================================

The continuous problem is driven by sqrt(2) dW and penalizes the control m
by |m|^2 / (4 lam) per unit time. Its Euler chain therefore has noise
variance 2 * delta per step and increments a = 2 sqrt(lam) delta m. This
script shows the grid-DP value of the discrete problem under both noise
conventions, using the same fine control grid, next to the closed form.
"""

import numpy as np

from meshmdp import ActionSet, LqgConfig, build_lqg_spec, grid_dp
from meshmdp.lqg import lqg_reference

for sign in ("minus", "plus"):
    ref = lqg_reference(LqgConfig(terminal_sign=sign)).value
    print(f"F = {'-' if sign == 'minus' else '+'}log((1+x^2)/2): closed form {ref:.4f}")
    for noise_scale in (1.0, 2.0):
        cfg = LqgConfig(terminal_sign=sign, noise_scale=noise_scale, action_units="control")
        acts = ActionSet.explicit(cfg.increment_halfwidth * np.linspace(-1, 1, 101)[:, None])
        v = grid_dp(build_lqg_spec(cfg), 0.0, acts).value
        print(f"    noise variance {noise_scale:g}*delta: discrete optimum {v:.4f}")
