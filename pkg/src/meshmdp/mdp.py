"""Problem definition, mesh simulation and forward policy evaluation."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidArgumentError
from .kernels import TransitionKernel
from .rng import step_uniforms

logger = logging.getLogger(__name__)

RewardFn = Callable[[int, np.ndarray, np.ndarray], np.ndarray]
TerminalFn = Callable[[np.ndarray], np.ndarray]


class RewardBoundWarning(UserWarning):
    """A reward, terminal or value exceeded the declared bound."""


@dataclass(frozen=True)
class MdpSpec:
    """Finite-horizon MDP with a density-based transition kernel.

    ``reward(h, x, a)`` and ``terminal(x)`` must be vectorized: ``x`` has
    shape ``(..., state_dim)``, ``a`` has shape ``(..., action_dim)`` and the
    leading axes broadcast. ``reward_bound`` is only used for warnings; pass
    ``None`` to skip the checks.
    """

    state_dim: int
    action_dim: int
    horizon: int
    reward: RewardFn
    terminal: TerminalFn
    kernel: TransitionKernel
    reward_bound: float | None = None

    def __post_init__(self):
        for name in ("state_dim", "action_dim", "horizon"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.kernel.dim != self.state_dim:
            raise InvalidArgumentError(f"kernel dim {self.kernel.dim} != state_dim {self.state_dim}")
        kh = getattr(self.kernel, "horizon", None)
        if kh is not None and kh < self.horizon:
            raise InvalidArgumentError(f"kernel defines {kh} steps, horizon is {self.horizon}")
        if self.reward_bound is not None and self.reward_bound < 0:
            raise InvalidArgumentError("reward_bound must be >= 0")

    def rewards(self, h: int, x: np.ndarray, a: np.ndarray) -> np.ndarray:
        """Reward broadcast to the joint leading shape of ``x`` and ``a``."""
        shape = np.broadcast_shapes(x.shape[:-1], a.shape[:-1])
        out = np.broadcast_to(np.asarray(self.reward(h, x, a), dtype=np.float64), shape)
        check_bound(out, self.reward_bound, f"reward at step {h}")
        return out

    def terminals(self, x: np.ndarray) -> np.ndarray:
        out = np.broadcast_to(np.asarray(self.terminal(x), dtype=np.float64), x.shape[:-1])
        check_bound(out, self.reward_bound, "terminal reward")
        return out


def check_bound(values: np.ndarray, bound: float | None, what: str) -> bool:
    """Warn (never raise) if ``|values|`` exceeds ``bound``."""
    if bound is None:
        return True
    worst = float(np.max(np.abs(values))) if np.size(values) else 0.0
    if worst > bound:
        warnings.warn(f"{what}: |value| {worst:.6g} exceeds declared bound {bound:.6g}", RewardBoundWarning, stacklevel=3)
        return False
    return True


@dataclass(frozen=True)
class ActionSet:
    """Finite set of candidate actions, one per row of ``actions``."""

    actions: np.ndarray
    provenance: dict = field(default_factory=lambda: {"kind": "explicit"})

    def __post_init__(self):
        acts = np.atleast_2d(np.asarray(self.actions, dtype=np.float64))
        if acts.shape[0] == 0:
            raise InvalidArgumentError("action set must be non-empty")
        acts.setflags(write=False)
        object.__setattr__(self, "actions", acts)
        hw = self.provenance.get("halfwidth")
        if hw is not None and np.any(np.abs(acts) > hw):
            raise InvalidArgumentError(f"sampled actions must lie in [-{hw}, {hw}]")

    def __len__(self) -> int:
        return self.actions.shape[0]

    @property
    def dim(self) -> int:
        return self.actions.shape[1]

    @classmethod
    def explicit(cls, actions) -> "ActionSet":
        return cls(np.asarray(actions, dtype=np.float64), {"kind": "explicit"})


@dataclass(frozen=True)
class TrajectoryMesh:
    """``states[n, h]`` is ``S_h^(n)``; every path starts at ``start_state``."""

    states: np.ndarray
    representative_controls: np.ndarray
    start_state: np.ndarray
    seed: int

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def to_csv(self, path) -> None:
        """Flat dump: one row per (path, step) with columns ``path,step,x0..x{d-1}``."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "step"] + [f"x{i}" for i in range(self.dim)])
            for n in range(self.n_paths):
                for h in range(self.horizon + 1):
                    w.writerow([n, h] + [repr(float(v)) for v in self.states[n, h]])

    @staticmethod
    def states_from_csv(path) -> np.ndarray:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n_paths = int(data[:, 0].max()) + 1
        n_steps = int(data[:, 1].max()) + 1
        states = np.empty((n_paths, n_steps, data.shape[1] - 2))
        states[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2:]
        return states


@dataclass(frozen=True)
class PolicyTable:
    """Greedy action index per mesh point and step, shape ``(N, H)``."""

    choices: np.ndarray
    action_set: ActionSet

    def __post_init__(self):
        c = np.asarray(self.choices)
        if c.ndim != 2:
            raise InvalidArgumentError("choices must be a 2-d array")
        if c.size and (c.min() < 0 or c.max() >= len(self.action_set)):
            raise InvalidArgumentError("policy index outside the action set")


def simulate_paths(kernel: TransitionKernel, controls, x0, n_paths: int, seed: int) -> np.ndarray:
    """Simulate ``n_paths`` chains from ``x0`` under fixed ``controls``.

    Path ``n`` at step ``h`` consumes substream ``(seed, h, n)`` only.
    """
    if n_paths < 1:
        raise InvalidArgumentError(f"n_paths must be >= 1, got {n_paths}")
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    controls = np.asarray(controls, dtype=np.float64)
    if x0.shape[0] != kernel.dim:
        raise InvalidArgumentError(f"x0 has length {x0.shape[0]}, expected {kernel.dim}")
    n_steps = controls.shape[0]
    states = np.empty((n_paths, n_steps + 1, kernel.dim))
    states[:, 0] = x0
    for h in range(n_steps):
        u = step_uniforms(seed, h, n_paths, kernel.noise_width)
        states[:, h + 1] = kernel.transition(h, states[:, h], controls[h], u)
    return states


def simulate_mesh(spec: MdpSpec, b, x0, n_paths: int, seed: int) -> TrajectoryMesh:
    """Simulate the mesh under representative controls ``b`` (one per step)."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim == 1 and spec.action_dim == 1:
        b = b[:, None]
    if b.shape != (spec.horizon, spec.action_dim):
        raise InvalidArgumentError(f"controls must have shape ({spec.horizon}, {spec.action_dim}), got {b.shape}")
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x0.shape[0] != spec.state_dim:
        raise InvalidArgumentError(f"x0 has length {x0.shape[0]}, expected {spec.state_dim}")
    states = simulate_paths(spec.kernel, b, x0, n_paths, seed)
    for arr in (states, b, x0):
        arr.setflags(write=False)
    return TrajectoryMesh(states, b, x0, int(seed))


def evaluate_policy(spec: MdpSpec, mesh: TrajectoryMesh, policy: PolicyTable, value_table, n_eval_paths: int, seed: int):
    """Forward Monte Carlo value of the mesh policy started at ``mesh.start_state``.

    Off the mesh, the action is the greedy action of the nearest (Euclidean)
    mesh point at the same step. Returns ``(mean, std_error)``.
    """
    N, H = mesh.n_paths, mesh.horizon
    if policy.choices.shape != (N, H):
        raise InvalidArgumentError(f"policy shape {policy.choices.shape} does not match mesh ({N}, {H})")
    if np.shape(value_table.values) != (N, H + 1):
        raise InvalidArgumentError("value table does not match mesh")
    if H != spec.horizon:
        raise InvalidArgumentError("mesh horizon differs from spec horizon")
    if n_eval_paths < 1:
        raise InvalidArgumentError("n_eval_paths must be >= 1")
    acts = policy.action_set.actions
    x = np.broadcast_to(mesh.start_state, (n_eval_paths, spec.state_dim)).copy()
    total = np.zeros(n_eval_paths)
    for h in range(H):
        pts = mesh.states[:, h]
        if np.all(pts == pts[0]):
            idx = np.zeros(n_eval_paths, dtype=int)
        else:
            _, idx = cKDTree(pts).query(x)
        a = acts[policy.choices[idx, h]]
        total += spec.rewards(h, x, a)
        x = spec.kernel.transition(h, x, a, step_uniforms(seed, h, n_eval_paths, spec.kernel.noise_width))
    total += spec.terminals(x)
    mean = float(total.mean())
    se = float(total.std(ddof=1) / math.sqrt(n_eval_paths)) if n_eval_paths > 1 else 0.0
    return mean, se
