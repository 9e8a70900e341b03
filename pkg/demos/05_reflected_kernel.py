"""
Reflected chain on a ball
=========================

A Gaussian step that leaves the ball B_R is replaced by a uniform point in
the ball. The resulting density is the Gaussian density plus the exit
probability spread evenly over the ball, and the exit probability is a
noncentral chi-square tail.
"""

import math

import numpy as np
from scipy import integrate

from meshmdp import GaussianShiftKernel, ReflectedKernel, ball_tail_mass

inner = GaussianShiftKernel((0.5,), 1)
rk = ReflectedKernel(inner, domain_radius=1.0)

x, a = np.array([0.7]), np.array([0.2])
p_exit = ball_tail_mass(abs(x[0] + a[0]), 0.5, 1.0, 1)
print(f"exit probability from x+a=0.9: {p_exit:.6f}")

total, _ = integrate.quad(lambda y: math.exp(rk.log_density(0, x, a, np.array([y]))), -1, 1, points=[0.9])
print(f"reflected density integrates to {total:.12f} on [-1, 1]")

ys = rk.sample(0, np.broadcast_to(x, (100_000, 1)), a, np.random.default_rng(0))[:, 0]
print(f"all samples inside the ball: {bool(np.all(np.abs(ys) <= 1.0))}")
hist, edges = np.histogram(ys, bins=8, range=(-1, 1), density=True)
mids = 0.5 * (edges[:-1] + edges[1:])
for m, hgt in zip(mids, hist):
    dens = math.exp(rk.log_density(0, x, a, np.array([m])))
    print(f"  y={m:+.3f}  histogram {hgt:.3f}  density at midpoint {dens:.3f}")

# In two dimensions, from the centre, the tail has the closed form exp(-R^2 / (2 sigma^2)).
print(f"d=2 centred tail: {ball_tail_mass(0.0, 0.5, 1.0, 2):.12f} vs {math.exp(-2.0):.12f}")
