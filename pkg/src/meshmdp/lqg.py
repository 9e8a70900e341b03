"""Discretized LQG control benchmark.

The controlled chain is ``S_{h+1} = S_h + a_h + sigma * eps`` with reward
``-|a|^2 / (4 lambda Delta)`` per step and terminal reward
``F(x) = +/- log((1 + |x|^2) / 2)``. Its continuous-time counterpart has the
closed-form value computed by :func:`meshmdp.oracles.lqg_closed_form`.

Two knobs decide how the discrete problem relates to that closed form:

``noise_scale``
    ``sigma^2 = noise_scale * Delta``. The diffusion ``sqrt(2) dW`` of the
    continuous problem corresponds to ``noise_scale = 2``.
``action_units``
    ``"increment"`` samples ``a`` uniformly on ``[-A, A]^d``. ``"control"``
    samples the control ``m`` on ``[-A, A]^d`` and maps it to the increment
    ``a = 2 sqrt(lambda) Delta m``.

The shipped table configs use ``noise_scale = 2`` and ``action_units =
"control"``; see the README for the comparison.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .kernels import GaussianShiftKernel
from .mdp import ActionSet, MdpSpec, simulate_mesh
from .oracles import OracleEstimate, lqg_closed_form
from .rng import derive_seed, step_uniforms
from .solver import backward_solve

logger = logging.getLogger(__name__)

TABLE_COLUMNS = [
    "config_id",
    "n_paths",
    "mean",
    "abs_bias",
    "std",
    "reference",
    "reference_std",
    "degenerate_count",
    "density_evals",
    "wall_time_s",
]


@dataclass(frozen=True)
class LqgConfig:
    dim: int = 1
    lam: float = 1.0
    T: float = 0.2
    delta: float = 0.01
    action_halfwidth: float = 1.0
    n_actions: int = 50
    terminal_sign: str = "minus"
    x0: tuple = ()
    n_paths_list: tuple = (10, 100, 200, 500)
    n_repetitions: int = 30
    seed: int = 0
    noise_scale: float = 1.0
    action_units: str = "increment"
    reference_samples: int = 10_000
    leave_one_out: bool = True
    config_id: str = "lqg"

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgumentError("dim must be >= 1")
        if not (self.lam > 0 and self.delta > 0 and self.T > 0):
            raise InvalidArgumentError("lambda, delta and T must be positive")
        if self.horizon < 1:
            raise InvalidArgumentError(f"T/delta rounds to {self.horizon} steps")
        if self.terminal_sign not in ("plus", "minus"):
            raise InvalidArgumentError(f"terminal_sign must be 'plus' or 'minus', got {self.terminal_sign!r}")
        if self.action_units not in ("increment", "control"):
            raise InvalidArgumentError(f"action_units must be 'increment' or 'control', got {self.action_units!r}")
        if not (self.noise_scale > 0 and self.action_halfwidth > 0):
            raise InvalidArgumentError("noise_scale and action_halfwidth must be positive")
        if self.n_actions < 1 or self.n_repetitions < 1 or self.reference_samples < 2:
            raise InvalidArgumentError("n_actions, n_repetitions must be >= 1 and reference_samples >= 2")
        if any(int(n) < 2 for n in self.n_paths_list):
            raise InvalidArgumentError("every n_paths must be >= 2")
        x0 = tuple(float(v) for v in self.x0) if self.x0 else (0.0,) * self.dim
        if len(x0) != self.dim:
            raise InvalidArgumentError(f"x0 has length {len(x0)}, expected {self.dim}")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "n_paths_list", tuple(sorted(int(n) for n in self.n_paths_list)))

    @property
    def horizon(self) -> int:
        return int(round(self.T / self.delta))

    @property
    def sigma(self) -> float:
        return math.sqrt(self.noise_scale * self.delta)

    @property
    def increment_halfwidth(self) -> float:
        """Bound on each coordinate of the increment ``a``."""
        if self.action_units == "control":
            return 2.0 * math.sqrt(self.lam) * self.delta * self.action_halfwidth
        return self.action_halfwidth

    def with_(self, **changes) -> "LqgConfig":
        d = asdict(self)
        if "dim" in changes and changes["dim"] != self.dim and "x0" not in changes:
            d["x0"] = ()
        d.update(changes)
        return LqgConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x0"] = list(self.x0)
        d["n_paths_list"] = list(self.n_paths_list)
        d["horizon"] = self.horizon
        return d


def lqg_terminal(sign: str):
    s = -1.0 if sign == "minus" else 1.0

    def terminal(x):
        x = np.asarray(x, dtype=np.float64)
        return s * np.log((1.0 + np.einsum("...i,...i->...", x, x)) / 2.0)

    return terminal


def build_lqg_spec(cfg: LqgConfig) -> MdpSpec:
    """The discrete LQG problem as an :class:`MdpSpec` with a Gaussian shift kernel."""
    scale = 1.0 / (4.0 * cfg.lam * cfg.delta)

    def reward(h, x, a):
        a = np.asarray(a, dtype=np.float64)
        return -scale * np.einsum("...i,...i->...", a, a)

    kernel = GaussianShiftKernel((cfg.sigma,) * cfg.horizon, cfg.dim)
    return MdpSpec(cfg.dim, cfg.dim, cfg.horizon, reward, lqg_terminal(cfg.terminal_sign), kernel)


def sample_actions(d: int, count: int, halfwidth: float, seed: int) -> ActionSet:
    """The zero action followed by ``count`` uniform draws from ``[-halfwidth, halfwidth]^d``."""
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    u = step_uniforms(seed, 0, count, d)
    acts = np.vstack([np.zeros((1, d)), halfwidth * (2.0 * u - 1.0)])
    prov = {"kind": "uniform_sampled", "seed": int(seed), "count": int(count), "halfwidth": float(halfwidth), "zero_prepended": True}
    return ActionSet(acts, prov)


def lqg_action_set(cfg: LqgConfig, seed: int) -> ActionSet:
    acts = sample_actions(cfg.dim, cfg.n_actions, cfg.action_halfwidth, seed)
    if cfg.action_units == "increment":
        return acts
    scale = 2.0 * math.sqrt(cfg.lam) * cfg.delta
    prov = dict(acts.provenance, units="control", increment_scale=scale, halfwidth=cfg.increment_halfwidth)
    return ActionSet(acts.actions * scale, prov)


def lqg_reference(cfg: LqgConfig) -> OracleEstimate:
    """Closed-form value at ``x0`` by Monte Carlo with ``cfg.reference_samples`` draws."""
    return lqg_closed_form(
        np.asarray(cfg.x0),
        0.0,
        cfg.lam,
        cfg.T,
        lqg_terminal(cfg.terminal_sign),
        cfg.reference_samples,
        derive_seed(cfg.seed, "reference"),
    )


@dataclass
class RunResult:
    config_id: str
    n_paths: int
    mean: float
    abs_bias: float
    std: float
    reference: float
    reference_std: float
    degenerate_count: int
    density_evals: int
    wall_time: float
    values: list = field(default_factory=list)
    error: str | None = None

    def csv_row(self) -> list:
        return [
            self.config_id,
            self.n_paths,
            repr(self.mean),
            repr(self.abs_bias),
            repr(self.std),
            repr(self.reference),
            repr(self.reference_std),
            self.degenerate_count,
            self.density_evals,
            f"{self.wall_time:.3f}",
        ]


def solve_once(cfg: LqgConfig, n_paths: int, rep: int):
    """One full pipeline run: fresh mesh, fresh action set, backward solve.

    Returns ``(root_value, degenerate_count, density_evals)``.
    """
    spec = build_lqg_spec(cfg)
    mesh = simulate_mesh(spec, np.zeros((spec.horizon, cfg.dim)), cfg.x0, n_paths, derive_seed(cfg.seed, "mesh", n_paths, rep))
    actions = lqg_action_set(cfg, derive_seed(cfg.seed, "actions", n_paths, rep))
    vt, _, cost = backward_solve(mesh, spec, actions, leave_one_out=cfg.leave_one_out)
    return vt.root_value, cost.degenerate_count, cost.density_evals


def _solve_star(args):
    return solve_once(*args)


def _run_reps(cfg: LqgConfig, n_paths: int, workers: int):
    jobs = [(cfg, n_paths, r) for r in range(cfg.n_repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_solve_star, jobs))
    return [solve_once(*j) for j in jobs]


def _aggregate(cfg, n_paths, outs, ref, wall):
    vals = [o[0] for o in outs]
    mean = float(np.mean(vals))
    if len(vals) > 1:
        std = float(np.std(vals, ddof=1))
    else:
        warnings.warn("single repetition: std reported as 0", stacklevel=3)
        std = 0.0
    return RunResult(
        cfg.config_id,
        n_paths,
        mean,
        abs(mean - ref.value),
        std,
        ref.value,
        ref.std_error,
        int(sum(o[1] for o in outs)),
        int(outs[0][2]),
        wall,
        vals,
    )


def run_table(cfg: LqgConfig, workers: int = 1, reference: OracleEstimate | None = None) -> list[RunResult]:
    """One row per ``N`` (ascending), each aggregating ``n_repetitions`` solves.

    A failing row is recorded with ``error`` set and NaN statistics; the
    remaining rows still run.
    """
    ref = lqg_reference(cfg) if reference is None else reference
    rows = []
    for n_paths in cfg.n_paths_list:
        t0 = time.perf_counter()
        try:
            outs = _run_reps(cfg, n_paths, workers)
        except Exception as exc:  # noqa: BLE001 - row-level isolation
            logger.error("row N=%d failed: %s", n_paths, exc)
            nan = float("nan")
            rows.append(RunResult(cfg.config_id, n_paths, nan, nan, nan, ref.value, ref.std_error, 0, 0, time.perf_counter() - t0, [], repr(exc)))
            continue
        row = _aggregate(cfg, n_paths, outs, ref, time.perf_counter() - t0)
        logger.info("%s N=%d mean=%.4f std=%.4f ref=%.4f", cfg.config_id, n_paths, row.mean, row.std, ref.value)
        rows.append(row)
    return rows


def write_table_csv(rows: list[RunResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in rows:
            w.writerow(r.csv_row())


SWEEP_COLUMNS = ["lambda", "mesh_value", "mesh_std", "reference_value", "reference_std"]


def lambda_sweep(cfg: LqgConfig, lambdas, workers: int = 1) -> list[dict]:
    """Mesh estimate and closed-form reference for each ``lambda``.

    Uses the largest ``N`` of the config and the same derived seeds as
    :func:`run_table`, so a one-element sweep at ``cfg.lam`` reproduces
    that table row.
    """
    lambdas = [float(v) for v in lambdas]
    if not lambdas or any(v <= 0 for v in lambdas):
        raise InvalidArgumentError("lambdas must be a non-empty list of positive values")
    n_paths = cfg.n_paths_list[-1]
    rows = []
    for lam in lambdas:
        c = cfg.with_(lam=lam)
        ref = lqg_reference(c)
        row = _aggregate(c, n_paths, _run_reps(c, n_paths, workers), ref, 0.0)
        rows.append({"lambda": lam, "mesh_value": row.mean, "mesh_std": row.std, "reference_value": ref.value, "reference_std": ref.std_error})
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[c])) for c in SWEEP_COLUMNS])


def calibrate_lambda(cfg: LqgConfig, target: float, lambdas) -> tuple[float, list[tuple[float, float]]]:
    """Pick the ``lambda`` whose closed-form reference is closest to ``target``.

    Returns the chosen value and the scanned ``(lambda, reference)`` pairs.
    """
    scan = [(float(lam), lqg_reference(cfg.with_(lam=float(lam))).value) for lam in lambdas]
    if not scan:
        raise InvalidArgumentError("empty lambda grid")
    best = min(scan, key=lambda p: (abs(p[1] - target), p[0]))
    return best[0], scan
