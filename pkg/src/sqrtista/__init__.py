"""Square-root Lasso solvers: SQRT-ISTA, group SQRT-ISTA, ISTA, and convergence diagnostics."""

from .diagnostics import (
    CheckReport,
    OracleResult,
    check_asymptotic_regularity,
    check_monotone,
    check_rate_bound,
    check_sigma_ratio,
    check_subdiff_bound,
    grid_oracle,
    lasso_equivalence_check,
    run_trace_checks,
)
from .objective import Problem, cost, joint_cost, lasso_cost, penalty_value, residual_norm, surrogate_cost
from .operator import (
    CircularConvolution,
    DenseMap,
    LinearMap,
    NormEstimate,
    default_stepsize,
    estimate_spectral_norm,
)
from .problems import load_problem, make_deconvolution_1d, make_figure1, make_gaussian_sensing, save_problem
from .prox import (
    GroupPartition,
    PenaltySpec,
    block_soft_threshold,
    kkt_distance,
    soft_threshold,
    soft_threshold_weighted,
)
from .solver import (
    IterateState,
    SolveReport,
    SolverConfig,
    Status,
    Trace,
    ZeroResidualPolicy,
    ista_step,
    solve_group_sqrt_ista,
    solve_ista,
    solve_sqrt_ista,
    sqrt_ista_step,
)

__version__ = "0.1.0"
