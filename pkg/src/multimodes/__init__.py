"""Multi-modes Monte Carlo finite element method for weakly random elliptic PDEs.

Expands the solution of -div((a0 + eps*eta) grad u) = f in powers of eps;
every mode shares the deterministic operator -div(a0 grad .), so one stored
factorization answers all M*N mode systems by forward/backward substitution.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .analysis import (
    ConvergenceTable,
    NormKind,
    convergence_orders,
    discrete_norm,
    error_vs_exact,
    exact_expectation_1d,
    mc_standard_error,
    quadrature_expectation_1d,
)
from .assembly import (
    FieldVector,
    QuadratureRule,
    SparseSpd,
    assemble_load_f,
    assemble_mass,
    assemble_perturbation_matrix,
    assemble_stiffness,
    mode_rhs,
)
from .mesh import Interval1D, Mesh, Rect2D, build_mesh_1d, build_mesh_2d
from .random_fields import (
    Deterministic,
    ExpAbs,
    KLField,
    ScalarUniform,
    TrigSeriesEta2D,
    TrigSeriesF2D,
    draw_sample,
    kl_decompose,
    kl_to_weak_form,
)
from .solver import (
    RunResult,
    SolverConfig,
    run_bruteforce_mc,
    run_mode_sweep,
    run_multimode_mc,
    solve_modes_one_sample,
)
from .sparse_direct import Factorization, OpCounters, factorize, solve_with_factors

__all__ = [
    "__version__",
    "KERNEL_BACKEND",
    "Interval1D",
    "Rect2D",
    "Mesh",
    "build_mesh_1d",
    "build_mesh_2d",
    "QuadratureRule",
    "SparseSpd",
    "FieldVector",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_load_f",
    "assemble_perturbation_matrix",
    "mode_rhs",
    "Factorization",
    "OpCounters",
    "factorize",
    "solve_with_factors",
    "ScalarUniform",
    "TrigSeriesEta2D",
    "TrigSeriesF2D",
    "Deterministic",
    "KLField",
    "ExpAbs",
    "draw_sample",
    "kl_decompose",
    "kl_to_weak_form",
    "SolverConfig",
    "RunResult",
    "run_multimode_mc",
    "run_bruteforce_mc",
    "run_mode_sweep",
    "solve_modes_one_sample",
    "NormKind",
    "discrete_norm",
    "error_vs_exact",
    "exact_expectation_1d",
    "quadrature_expectation_1d",
    "convergence_orders",
    "ConvergenceTable",
    "mc_standard_error",
]
