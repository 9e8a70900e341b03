"""Weighted stochastic mesh: leave-one-out weights and backward recursion.

For a target state ``x`` and action ``a`` at step ``h`` the weight of mesh
point ``n`` is

    p^a(S_{h+1}^n | x) / sum_{k != n} p^{b_h}(S_{h+1}^n | S_h^k)

normalized over ``n``. Everything is kept in log space; the normalization
is a max-shifted exponential sum. When every numerator is an exact zero the
weights are all zero and the expectation is zero (0/0 := 0).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .kernels import TransitionKernel
from .mdp import ActionSet, MdpSpec, PolicyTable, RewardBoundWarning, TrajectoryMesh

logger = logging.getLogger(__name__)

# doubles per temporary block in the batched expectation
_BLOCK_ELEMS = 1 << 17


class DegenerateWeightsWarning(UserWarning):
    """All weight numerators vanished at some (state, action) cell."""


@dataclass(frozen=True)
class DenominatorTable:
    log_denoms: np.ndarray
    step: int
    neg_inf_flags: np.ndarray


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    degenerate: bool


@dataclass(frozen=True)
class ValueTable:
    """``values[n, h]`` approximates the optimal value at ``S_h^(n)``."""

    values: np.ndarray

    @property
    def root_value(self) -> float:
        return float(self.values[0, 0])


@dataclass
class CostCounter:
    """Kernel density evaluations spent by a solve.

    ``density_evals`` counts individual ``p(y | x)`` values, split into the
    denominator share (``H N (N-1)`` for a full solve) and the numerator share.
    """

    n_paths: int = 0
    horizon: int = 0
    denominator_evals: int = 0
    numerator_evals: int = 0
    weight_builds: int = 0
    degenerate_count: int = 0

    @property
    def density_evals(self) -> int:
        return self.denominator_evals + self.numerator_evals

    @property
    def hn2_budget(self) -> int:
        return self.horizon * self.n_paths**2

    def as_dict(self) -> dict:
        return {
            "density_evals": self.density_evals,
            "denominator_evals": self.denominator_evals,
            "numerator_evals": self.numerator_evals,
            "weight_builds": self.weight_builds,
            "degenerate_count": self.degenerate_count,
            "hn2_budget": self.hn2_budget,
        }


def _logsumexp_rows(block: np.ndarray) -> np.ndarray:
    """log(sum(exp(block), axis=0)) with -inf columns kept at -inf."""
    mx = block.max(axis=0)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(block - safe).sum(axis=0)) + safe


def precompute_denominators(
    mesh: TrajectoryMesh, kernel: TransitionKernel, h: int, cost: CostCounter | None = None, leave_one_out: bool = True
) -> DenominatorTable:
    """Leave-one-out log-denominators ``log sum_{k != n} p^{b_h}(S_{h+1}^n | S_h^k)``.

    Rows ``k`` are reduced in fixed ascending blocks, so the result does not
    depend on anything but the inputs. ``leave_one_out=False`` keeps the
    ``k = n`` term (classical average-density mesh weights); it exists for
    ablations only.
    """
    N = mesh.n_paths
    if N < 2:
        raise InvalidArgumentError("leave-one-out weights need at least 2 paths")
    if not 0 <= h < mesh.horizon:
        raise InvalidArgumentError(f"step {h} outside [0, {mesh.horizon})")
    src = mesh.states[:, h]
    dst = mesh.states[:, h + 1]
    b = mesh.representative_controls[h][None, :]
    rows = max(1, _BLOCK_ELEMS // N)
    acc = np.full(N, -np.inf)
    for start in range(0, N, rows):
        stop = min(N, start + rows)
        block = kernel.log_density_grid(h, src[start:stop], b, dst)[:, 0, :]
        if leave_one_out:
            k = np.arange(start, stop)
            block[k - start, k] = -np.inf
        acc = np.logaddexp(acc, _logsumexp_rows(block))
    if cost is not None:
        cost.denominator_evals += N * (N - 1) if leave_one_out else N * N
    acc.setflags(write=False)
    return DenominatorTable(acc, h, np.isneginf(acc))


def _weighted_sums(t: np.ndarray, fmat: np.ndarray):
    """Self-normalized sums along the last axis of the log-terms ``t``.

    ``t`` holds ``log numerator - log denominator`` and is overwritten.
    ``fmat`` is ``(N, m)``. Returns ``(sums (..., m), degenerate (...))``.
    """
    mx = t.max(axis=-1)
    if not np.all(np.isfinite(mx)):
        # 0/0 terms (nan) are zero numerators; +inf terms split the mass evenly
        t[np.isnan(t)] = -np.inf
        mx = t.max(axis=-1)
        pos = np.isposinf(mx)
        if np.any(pos):
            t[pos] = np.where(np.isposinf(t[pos]), 0.0, -np.inf)
            mx[pos] = 0.0
    degenerate = np.isneginf(mx)
    mx[degenerate] = 0.0
    t -= mx[..., None]
    np.exp(t, out=t)
    sums = t @ fmat
    return sums, degenerate


def mesh_expectation(x, a, h: int, f_values, mesh: TrajectoryMesh, kernel: TransitionKernel, denoms: DenominatorTable):
    """Approximate ``E[f(S_{h+1}) | S_h = x, action a]`` on the mesh.

    Returns ``(value, WeightVector)``; a degenerate weight vector gives value 0.
    """
    if denoms.step != h:
        raise InvalidArgumentError(f"denominators are for step {denoms.step}, not {h}")
    f = np.asarray(f_values, dtype=np.float64)
    if f.shape != (mesh.n_paths,):
        raise InvalidArgumentError(f"f_values must have shape ({mesh.n_paths},)")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    a = np.asarray(a, dtype=np.float64).reshape(1, -1)
    t = kernel.log_density_grid(h, x, a, mesh.states[:, h + 1], -denoms.log_denoms)[0]
    fmat = np.column_stack([f, np.ones_like(f)])
    sums, degenerate = _weighted_sums(t, fmat)
    if degenerate[0]:
        return 0.0, WeightVector(np.zeros(mesh.n_paths), True)
    w = t[0] / sums[0, 1]
    return float(sums[0, 0] / sums[0, 1]), WeightVector(w, False)


def contraction_check(f, g, x, a, h: int, mesh: TrajectoryMesh, kernel: TransitionKernel, denoms: DenominatorTable) -> bool:
    """True iff ``|E(f) - E(g)| <= max |f - g| + 1e-12`` at ``(x, a)``."""
    ef, _ = mesh_expectation(x, a, h, f, mesh, kernel, denoms)
    eg, _ = mesh_expectation(x, a, h, g, mesh, kernel, denoms)
    gap = float(np.max(np.abs(np.asarray(f) - np.asarray(g))))
    return abs(ef - eg) <= gap + 1e-12


def bellman_step(spec: MdpSpec, mesh: TrajectoryMesh, actions: ActionSet, h: int, next_values, denoms: DenominatorTable, points=None, cost: CostCounter | None = None):
    """One mesh Bellman update at step ``h``.

    Evaluates ``max_a [R_h(x, a) + E_{h,N}(x, a; next_values)]`` at each row of
    ``points`` (default: the mesh states at step ``h``). Ties go to the lowest
    action index. Returns ``(values, argmax_indices, degenerate_cells)``.
    """
    kernel = spec.kernel
    pts = mesh.states[:, h] if points is None else np.atleast_2d(np.asarray(points, dtype=np.float64))
    acts = actions.actions
    M, K, N = pts.shape[0], acts.shape[0], mesh.n_paths
    f = np.asarray(next_values, dtype=np.float64)
    fmat = np.column_stack([f, np.ones_like(f)])
    rewards = spec.rewards(h, pts[:, None, :], acts[None, :, :])
    values = np.empty(M)
    best = np.empty(M, dtype=np.intp)
    n_degenerate = 0
    rows = max(1, _BLOCK_ELEMS // (K * N))
    dst = mesh.states[:, h + 1]
    neg_log_denoms = -denoms.log_denoms
    for start in range(0, M, rows):
        stop = min(M, start + rows)
        t = kernel.log_density_grid(h, pts[start:stop], acts, dst, neg_log_denoms)
        sums, degenerate = _weighted_sums(t, fmat)
        with np.errstate(invalid="ignore", divide="ignore"):
            expect = np.where(degenerate, 0.0, sums[..., 0] / sums[..., 1])
        n_degenerate += int(degenerate.sum())
        q = rewards[start:stop] + expect
        idx = np.argmax(q, axis=1)
        best[start:stop] = idx
        values[start:stop] = q[np.arange(stop - start), idx]
    if cost is not None:
        cost.numerator_evals += M * K * N
        cost.weight_builds += M * K
        cost.degenerate_count += n_degenerate
    return values, best, n_degenerate


def backward_solve(mesh: TrajectoryMesh, spec: MdpSpec, actions: ActionSet, leave_one_out: bool = True):
    """Backward recursion over the mesh.

    Returns ``(ValueTable, PolicyTable, CostCounter)``. At step 0 only the
    common start point is evaluated; its value and greedy action are copied
    to every row of column 0.
    """
    N, H = mesh.n_paths, spec.horizon
    if mesh.horizon != H:
        raise InvalidArgumentError(f"mesh horizon {mesh.horizon} != spec horizon {H}")
    if actions.dim != spec.action_dim:
        raise InvalidArgumentError(f"actions have dim {actions.dim}, spec expects {spec.action_dim}")
    if N < 2:
        raise InvalidArgumentError("leave-one-out weights need at least 2 paths")
    cost = CostCounter(n_paths=N, horizon=H)
    values = np.empty((N, H + 1))
    choices = np.zeros((N, H), dtype=np.intp)
    values[:, H] = spec.terminals(mesh.states[:, H])
    for h in range(H - 1, -1, -1):
        denoms = precompute_denominators(mesh, spec.kernel, h, cost, leave_one_out)
        if h == 0:
            v, idx, n_deg = bellman_step(spec, mesh, actions, 0, values[:, 1], denoms, mesh.start_state[None, :], cost)
            values[:, 0] = v[0]
            choices[:, 0] = idx[0]
        else:
            v, idx, n_deg = bellman_step(spec, mesh, actions, h, values[:, h + 1], denoms, None, cost)
            values[:, h] = v
            choices[:, h] = idx
        if n_deg:
            warnings.warn(f"{n_deg} degenerate weight vectors at step {h}; their expectations were set to 0", DegenerateWeightsWarning, stacklevel=2)
        if spec.reward_bound is not None:
            bound = (H - h + 1) * spec.reward_bound
            worst = float(np.max(np.abs(values[:, h])))
            if worst > bound:
                warnings.warn(f"value at step {h} has magnitude {worst:.6g} above {bound:.6g}", RewardBoundWarning, stacklevel=2)
        logger.debug("step %d done: mean value %.6g", h, values[:, h].mean())
    values.setflags(write=False)
    choices.setflags(write=False)
    return ValueTable(values), PolicyTable(choices, actions), cost


def write_solution_csv(path, value_table: ValueTable, policy: PolicyTable) -> None:
    """Rows ``path,step,value,action_index``; step ``H`` has an empty action index."""
    import csv

    vals = value_table.values
    N, H1 = vals.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "step", "value", "action_index"])
        for n in range(N):
            for h in range(H1):
                act = int(policy.choices[n, h]) if h < H1 - 1 else ""
                w.writerow([n, h, repr(float(vals[n, h])), act])
