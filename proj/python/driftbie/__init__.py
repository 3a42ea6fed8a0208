"""Boundary integral solvers, harmonic measure and estimate checks for -div(A grad u) + b . grad u."""

from ._core import (
    Coefficients,
    InputError,
    Mesh,
    NumericalError,
    PoleError,
    Solution,
    UsageError,
    build_mesh,
    domain_green,
    estimate_measure,
    fundamental_solution,
    fundamental_solution_gradient,
    green_kernel,
    kernel_check,
    load_matrix,
    run_config,
    sample_data,
    single_layer,
    single_layer_matrix,
    solve_dirichlet_adjoint,
    solve_regularity,
    symmetrize,
)

__version__ = "0.1.0"
