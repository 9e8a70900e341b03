"""Weighted stochastic mesh solver for finite-horizon MDPs with transition densities.

Modules
-------
kernels
    Gaussian shift and reflected transition kernels, ball exit probabilities,
    density-bound diagnostics.
mdp
    Problem definition, mesh simulation, forward policy evaluation.
solver
    Leave-one-out mesh weights and the backward recursion.
oracles
    Closed-form LQG value, 1-d grid dynamic programming, weight consistency.
lqg
    The discretized LQG benchmark and its table / lambda-sweep drivers.
cli
    ``meshmdp`` command-line front end.
"""

from .errors import AccuracyError, DomainError, InvalidArgumentError, NumericError
from .kernels import (
    GaussianShiftKernel,
    KernelDiagnostics,
    ReflectedKernel,
    TransitionKernel,
    ball_tail_mass,
    diagnostics_for_schedule,
    gaussian_log_density,
    gaussian_sample,
    reflected_log_density,
    reflected_sample,
)
from .mdp import ActionSet, MdpSpec, PolicyTable, TrajectoryMesh, evaluate_policy, simulate_mesh
from .solver import (
    CostCounter,
    DenominatorTable,
    ValueTable,
    WeightVector,
    backward_solve,
    contraction_check,
    mesh_expectation,
    precompute_denominators,
)
from .oracles import OracleEstimate, grid_dp, lqg_closed_form, weight_consistency_curve
from .lqg import LqgConfig, RunResult, build_lqg_spec, lambda_sweep, run_table, sample_actions

__version__ = "0.1.0"
