"""
Leave-one-out weights and dimension
===================================

With only the zero action the mesh value is an estimate of E[F(S_H)],
which is known by quadrature in any dimension. Comparing the leave-one-out
denominators with the ones that keep the k = n term shows how the
leave-one-out estimator degrades in d=5, where the Gaussian kernels are so
peaked that a handful of paths carry each weight vector.
"""

import warnings

import numpy as np
from scipy import stats

from meshmdp import ActionSet, LqgConfig, backward_solve, build_lqg_spec, simulate_mesh

for d in (1, 5):
    cfg = LqgConfig(dim=d, noise_scale=2.0)
    spec = build_lqg_spec(cfg)
    # |S_H|^2 / (2 T) is chi-square with d degrees of freedom
    z = stats.chi2(d).ppf((np.arange(20_000) + 0.5) / 20_000)
    exact = float(np.mean(-np.log((1 + 2 * cfg.T * z) / 2)))
    print(f"d={d}: E[F(S_H)] = {exact:.4f}")
    for N in (100, 500):
        row = []
        for loo in (True, False):
            vals = []
            for rep in range(4):
                mesh = simulate_mesh(spec, np.zeros((spec.horizon, d)), np.zeros(d), N, seed=100 * rep + N)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    vt, _, _ = backward_solve(mesh, spec, ActionSet.explicit(np.zeros((1, d))), leave_one_out=loo)
                vals.append(vt.root_value)
            row.append(np.mean(vals))
        print(f"    N={N:4d}  leave-one-out {row[0]:+.4f}   keep k=n {row[1]:+.4f}")
