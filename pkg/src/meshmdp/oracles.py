"""Reference values that do not go through the mesh.

* :func:`lqg_closed_form` evaluates the Cole-Hopf log-moment formula by
  Monte Carlo.
* :func:`grid_dp` runs exact-in-the-limit backward induction on a 1-d
  state grid with Gauss-Hermite expectations.
* :func:`weight_consistency_curve` measures how far the mesh expectation is
  from the quadrature value of the same integral as the mesh grows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import AccuracyError, InvalidArgumentError, NumericError
from .kernels import GaussianShiftKernel, TransitionKernel
from .mdp import ActionSet, MdpSpec, TrajectoryMesh, simulate_paths
from .rng import step_normals
from .solver import CostCounter, mesh_expectation, precompute_denominators


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    std_error: float
    n_samples: int
    method: str
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"method": self.method, "value": self.value, "std_error": self.std_error, "n_samples": self.n_samples, "params": self.params},
            sort_keys=True,
        )


def log_moment(values: np.ndarray, lam: float) -> tuple[float, float]:
    """``(1/lam) log mean exp(lam * values)`` and its delta-method standard error."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    z = lam * v
    mx = z.max()
    # expm1/log1p keep precision when lam * spread is tiny
    e = np.expm1(z - mx)
    mean_e = e.mean()
    log_mean = math.log1p(mean_e) + mx
    value = log_mean / lam
    if n > 1:
        sd = (e.std(ddof=1)) / math.sqrt(n)
        se = sd / (1.0 + mean_e) / lam
    else:
        se = 0.0
    if not (math.isfinite(value) and math.isfinite(se)):
        raise NumericError(f"non-finite log-moment: value={value}, se={se}")
    return value, float(se)


def lqg_closed_form(x, t: float, lam: float, T: float, terminal: Callable, n_samples: int, seed: int) -> OracleEstimate:
    """Monte Carlo value of ``(1/lam) log E exp(lam F(x + sqrt(2 (T - t)) Z))``."""
    if not 0.0 <= t <= T:
        raise InvalidArgumentError(f"need 0 <= t <= T, got t={t}, T={T}")
    if not lam > 0:
        raise InvalidArgumentError("lambda must be positive")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    params = {"x": x.tolist(), "t": t, "lambda": lam, "T": T, "seed": int(seed)}
    if t == T:
        return OracleEstimate(float(terminal(x)), 0.0, 1, "closed_form_mc", params)
    z = step_normals(seed, 0, n_samples, x.size)
    fv = np.asarray(terminal(x + math.sqrt(2.0 * (T - t)) * z), dtype=np.float64)
    value, se = log_moment(fv, lam)
    return OracleEstimate(value, se, n_samples, "closed_form_mc", params)


def gaussian_expectation_1d(fn: Callable, mean: float, sd: float, nodes: int = 200) -> float:
    """``E[fn(mean + sd Z)]`` by Gauss-Hermite quadrature."""
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    return float(np.dot(w / w.sum(), fn(mean + sd * z)))


def _grid_backward(spec: MdpSpec, grid: np.ndarray, acts: np.ndarray, z: np.ndarray, w: np.ndarray):
    kernel = spec.kernel
    X = grid[:, None]
    V = np.asarray(spec.terminals(X), dtype=np.float64).copy()
    for h in range(spec.horizon - 1, -1, -1):
        s = kernel.sigma(h)
        m = grid[:, None] + acts[None, :, 0]
        vals = np.interp(m[..., None] + s * z, grid, V)
        cont = vals @ w
        q = spec.rewards(h, X[:, None, :], acts[None, :, :]) + cont
        V = q.max(axis=1)
    return V


def grid_dp(
    spec: MdpSpec,
    x0: float,
    actions: ActionSet,
    grid_step: float | None = None,
    half_width: float | None = None,
    quadrature_nodes: int = 64,
    tolerance: float = 2e-3,
) -> OracleEstimate:
    """Backward induction on a uniform 1-d grid (Gaussian shift kernel only).

    The expectation over the next state uses Gauss-Hermite quadrature and
    linear interpolation of the next value function (flat extrapolation
    beyond the grid). The grid is solved at ``grid_step`` and ``grid_step/2``;
    the finer value is returned and ``|difference| / 3`` (second-order
    Richardson) is reported as ``params["refinement_error"]``.
    """
    kernel = spec.kernel
    if spec.state_dim != 1 or not isinstance(kernel, GaussianShiftKernel):
        raise InvalidArgumentError("grid_dp needs a 1-d Gaussian shift kernel")
    acts = actions.actions
    reach = float(np.max(np.abs(acts))) * spec.horizon
    spread = math.sqrt(sum(s * s for s in kernel.sigmas[: spec.horizon]))
    min_half = 6.0 * spread + reach
    half_width = min_half if half_width is None else half_width
    if half_width < min_half - 1e-12:
        raise InvalidArgumentError(f"grid half width {half_width} below required {min_half}")
    max_step = kernel.sigma_min / 4.0
    grid_step = max_step if grid_step is None else grid_step
    if grid_step > max_step + 1e-15:
        raise InvalidArgumentError(f"grid step {grid_step} above sigma_min/4 = {max_step}")
    z, w = np.polynomial.hermite_e.hermegauss(quadrature_nodes)
    w = w / w.sum()

    def solve(step):
        n = int(math.ceil(half_width / step))
        grid = x0 + step * np.arange(-n, n + 1)
        V = _grid_backward(spec, grid, acts, z, w)
        return float(np.interp(x0, grid, V))

    coarse = solve(grid_step)
    fine = solve(grid_step / 2.0)
    err = abs(fine - coarse) / 3.0
    params = {"grid_step": grid_step / 2.0, "half_width": half_width, "nodes": quadrature_nodes, "refinement_error": err, "n_actions": len(actions)}
    if err > tolerance:
        raise AccuracyError(f"grid refinement error {err:.3g} exceeds tolerance {tolerance:.3g}")
    return OracleEstimate(fine, 0.0, 0, "grid_dp", params)


def weight_consistency_curve(
    kernel: TransitionKernel,
    mesh_family,
    x,
    a,
    h: int,
    f: Callable,
    seed: int,
    x0=None,
    controls=None,
):
    """Mesh expectation error against quadrature as ``N`` grows (1-d only).

    Fresh meshes start at ``x0`` (default origin) under ``controls`` (default
    zero). Each entry is ``(N, abs_error, denominator_sum_deviation)`` where
    the last is ``|sum_n p^a(S^n|x) / sum_{k!=n} p^b(S^n|S^k) - N/(N-1)|``.
    """
    if kernel.dim != 1:
        raise InvalidArgumentError("weight_consistency_curve needs a 1-d kernel")
    x = np.asarray(x, dtype=np.float64).reshape(1)
    a = np.asarray(a, dtype=np.float64).reshape(1)
    x0 = np.zeros(1) if x0 is None else np.asarray(x0, dtype=np.float64).reshape(1)
    controls = np.zeros((h + 1, 1)) if controls is None else np.asarray(controls, dtype=np.float64).reshape(-1, 1)[: h + 1]
    target = _kernel_expectation_1d(kernel, h, x, a, f)
    rows = []
    for N in mesh_family:
        states = simulate_paths(kernel, controls, x0, int(N), seed)
        mesh = TrajectoryMesh(states, controls, x0, seed)
        denoms = precompute_denominators(mesh, kernel, h, CostCounter())
        fv = np.asarray(f(states[:, h + 1]), dtype=np.float64).reshape(-1)
        est, _ = mesh_expectation(x, a, h, fv, mesh, kernel, denoms)
        log_num = kernel.log_density_grid(h, x[None], a[None], states[:, h + 1])[0, 0]
        dsum = math.exp(logsumexp(log_num - denoms.log_denoms))
        rows.append((int(N), abs(est - target), abs(dsum - N / (N - 1.0))))
    return rows


def _kernel_expectation_1d(kernel: TransitionKernel, h, x, a, f) -> float:
    from scipy.integrate import quad

    if isinstance(kernel, GaussianShiftKernel):
        mean, sd = float(x[0] + a[0]), kernel.sigma(h)
        return gaussian_expectation_1d(lambda y: np.asarray(f(y[:, None]), dtype=float).reshape(-1), mean, sd)

    def integrand(y):
        pt = np.array([[y]])
        return float(np.exp(kernel.log_density(h, x[None], a[None], pt))[0]) * float(np.asarray(f(pt)).reshape(-1)[0])

    r = getattr(kernel, "domain_radius", None)
    lo, hi = (-r, r) if r is not None else (-np.inf, np.inf)
    return quad(integrand, lo, hi, limit=200, epsabs=1e-12)[0]
