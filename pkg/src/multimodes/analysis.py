"""Discrete norms, the 1D closed-form oracles, convergence orders, MC stats.

The 1D model problem drives both the diffusion perturbation and the source
with one uniform scalar Y, so its exact expectation is known in closed form
and the Monte Carlo average over Y can be replaced by Gauss quadrature in Y,
removing all sampling noise from convergence studies.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .assembly import (
    FieldVector,
    _plan,
    assemble_load_f,
    assemble_perturbation_matrix,
    assemble_stiffness,
    default_rule,
    error_rule,
    norm_matrices,
)
from .errors import InvalidData, ShapeError, UnsupportedSpec
from .mesh import Interval1D, Mesh, meshes_compatible
from .random_fields import Deterministic, ScalarUniform, realize_field
from .solver import SolverConfig, build_mesh, solve_modes_one_sample
from .sparse_direct import factorize

__all__ = [
    "NormKind",
    "discrete_norm",
    "SmoothField",
    "error_vs_exact",
    "expectation_coefficient_1d",
    "exact_expectation_1d",
    "quadrature_expectation_1d",
    "ConvergenceRow",
    "ConvergenceTable",
    "convergence_orders",
    "mc_standard_error",
]


class NormKind(Enum):
    L2 = "l2"
    H1 = "h1"
    RELATIVE_L2 = "relative_l2"
    RELATIVE_H1 = "relative_h1"


_RELATIVE = (NormKind.RELATIVE_L2, NormKind.RELATIVE_H1)


def _quadratic_norms(mesh: Mesh, x: np.ndarray) -> tuple[float, float]:
    mass, stiff = norm_matrices(mesh)
    l2_sq = float(x @ mass.matvec(x))
    h1_sq = l2_sq + float(x @ stiff.matvec(x))
    return np.sqrt(max(l2_sq, 0.0)), np.sqrt(max(h1_sq, 0.0))


def discrete_norm(mesh: Mesh, v: FieldVector, kind: NormKind,
                  reference: FieldVector | None = None) -> float:
    """Discrete L2/H1 norm of a P1 function (exact via mass/stiffness forms).

    Relative kinds return norm(v - reference) / norm(reference).
    """
    if not meshes_compatible(v.mesh, mesh):
        raise ShapeError("field vector belongs to a different mesh")
    if kind in _RELATIVE:
        if reference is None:
            raise InvalidData("relative norms need a reference field")
        if not meshes_compatible(reference.mesh, mesh):
            raise ShapeError("reference belongs to a different mesh")
        num_l2, num_h1 = _quadratic_norms(mesh, v.values - reference.values)
        den_l2, den_h1 = _quadratic_norms(mesh, reference.values)
        if kind is NormKind.RELATIVE_L2:
            if den_l2 == 0.0:
                raise InvalidData("zero reference norm")
            return num_l2 / den_l2
        if den_h1 == 0.0:
            raise InvalidData("zero reference norm")
        return num_h1 / den_h1
    l2, h1 = _quadratic_norms(mesh, v.values)
    return l2 if kind is NormKind.L2 else h1


@dataclass(eq=False)
class SmoothField:
    """Closed-form field with gradient, for quadrature-based error measures."""

    value: Callable
    gradient: Callable


def _gradient_at(exact: SmoothField, pts: np.ndarray) -> np.ndarray:
    coords = [pts[:, d] for d in range(pts.shape[1])]
    g = exact.gradient(*coords)
    if pts.shape[1] == 1:
        comps = (g,)
    else:
        comps = tuple(g)
    return np.column_stack(
        [np.broadcast_to(np.asarray(c, float), (len(pts),)) for c in comps]
    )


def error_vs_exact(mesh: Mesh, v: FieldVector, exact: SmoothField,
                   kind: NormKind) -> float:
    """Quadrature norm of (P1 function - exact field); not interpolation-based.

    Uses the higher-order error rules so the measured error is the FE error,
    not a quadrature artifact.
    """
    if not meshes_compatible(v.mesh, mesh):
        raise ShapeError("field vector belongs to a different mesh")
    plan = _plan(mesh, error_rule(mesh.dim))
    full = np.zeros(mesh.n_vertices)
    inside = mesh.interior_dof >= 0
    full[inside] = v.values[mesh.interior_dof[inside]]
    vloc = full[mesh.elements]  # (ne, nloc)

    ne, nq = plan.n_elements, plan.n_quad
    vh = np.einsum("ei,qi->eq", vloc, plan.basis)
    ex = np.broadcast_to(
        np.asarray(
            exact.value(*(plan.phys_flat[:, d] for d in range(mesh.dim))),
            float,
        ),
        (ne * nq,),
    ).reshape(ne, nq)
    diff_sq = (vh - ex) ** 2
    l2_sq = float(np.einsum("eq,eq->", plan.wdet, diff_sq))
    ref_l2_sq = float(np.einsum("eq,eq->", plan.wdet, ex ** 2))

    if kind is NormKind.L2:
        return np.sqrt(l2_sq)
    if kind is NormKind.RELATIVE_L2:
        if ref_l2_sq == 0.0:
            raise InvalidData("zero reference norm")
        return np.sqrt(l2_sq / ref_l2_sq)

    gh = np.einsum("ei,eid->ed", vloc, plan.grads)  # constant per element
    gex = _gradient_at(exact, plan.phys_flat).reshape(ne, nq, mesh.dim)
    gdiff_sq = ((gh[:, None, :] - gex) ** 2).sum(axis=2)
    semi_sq = float(np.einsum("eq,eq->", plan.wdet, gdiff_sq))
    if kind is NormKind.H1:
        return np.sqrt(l2_sq + semi_sq)
    ref_h1_sq = ref_l2_sq + float(
        np.einsum("eq,eq->", plan.wdet, (gex ** 2).sum(axis=2))
    )
    if ref_h1_sq == 0.0:
        raise InvalidData("zero reference norm")
    return np.sqrt((l2_sq + semi_sq) / ref_h1_sq)


def expectation_coefficient_1d(epsilon: float) -> float:
    """c(eps) with E(u) = c(eps) (x - x^2) for the 1D model problem.

    c(eps) = (1/eps - ln(1+eps)/eps^2) / 2, continued by its power series
    sum_k (-eps)^k / (2(k+2)) near eps = 0 (limit 1/4).
    """
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidData(f"epsilon={epsilon} outside [0, 1]")
    if epsilon < 1e-3:
        k = np.arange(11)
        return float(np.sum((-epsilon) ** k / (2.0 * (k + 2))))
    return 0.5 * (1.0 / epsilon - np.log1p(epsilon) / epsilon ** 2)


def exact_expectation_1d(epsilon: float) -> SmoothField:
    """Closed-form expectation c(eps) (x - x^2) of the 1D model problem."""
    c = expectation_coefficient_1d(epsilon)
    return SmoothField(
        value=lambda x: c * (x - x ** 2),
        gradient=lambda x: c * (1.0 - 2.0 * x),
    )


def _quadrature_driver(eta_spec, f_spec) -> ScalarUniform:
    scalars = {s for s in (eta_spec, f_spec) if isinstance(s, ScalarUniform)}
    others = [
        s for s in (eta_spec, f_spec)
        if not isinstance(s, (ScalarUniform, Deterministic))
    ]
    if others or len(scalars) != 1:
        raise UnsupportedSpec(
            "quadrature expectation needs exactly one scalar uniform variable "
            "driving the spec pair (plus optional deterministic fields)"
        )
    return next(iter(scalars))


def quadrature_expectation_1d(config: SolverConfig, eta_spec=None, f_spec=None,
                              n_quad: int = 64) -> FieldVector:
    """Noise-free estimator: Gauss quadrature in Y replaces the MC average.

    Defaults to the 1D model pair eta = f = Y with Y uniform on [0, 1].
    """
    if not isinstance(config.domain, Interval1D):
        raise UnsupportedSpec("quadrature expectation is 1D only")
    if eta_spec is None and f_spec is None:
        eta_spec = f_spec = ScalarUniform(0.0, 1.0)
    driver = _quadrature_driver(eta_spec, f_spec)

    mesh = build_mesh(config)
    quad = default_rule(1)
    k0 = assemble_stiffness(mesh, config.a0, quad)
    fac = factorize(k0)

    y, w = np.polynomial.legendre.leggauss(n_quad)
    half = 0.5 * (driver.hi - driver.lo)
    y = driver.lo + half * (y + 1.0)
    w = w * half / (driver.hi - driver.lo)  # uniform density

    psi = np.zeros(mesh.n_interior)
    for yk, wk in zip(y, w):
        eta_field = realize_field(eta_spec, yk)
        f_field = realize_field(f_spec, yk)
        b = assemble_load_f(mesh, f_field, quad)
        k_eta = assemble_perturbation_matrix(mesh, eta_field, quad)
        partial, _ = solve_modes_one_sample(
            fac, k_eta, b, config.n_modes, config.epsilon
        )
        psi += wk * partial.values
    return FieldVector(psi, mesh)


@dataclass(frozen=True)
class ConvergenceRow:
    parameter: float
    error: float
    order: float | None


@dataclass(eq=False)
class ConvergenceTable:
    rows: list

    @property
    def orders(self) -> list:
        return [r.order for r in self.rows if r.order is not None]

    @property
    def errors(self) -> list:
        return [r.error for r in self.rows]


def convergence_orders(pairs) -> ConvergenceTable:
    """Fitted order log(e_i/e_{i+1}) / log(p_i/p_{i+1}) between rows."""
    pairs = [(float(p), float(e)) for p, e in pairs]
    params = [p for p, _ in pairs]
    if any(b >= a for a, b in zip(params, params[1:])):
        raise InvalidData("parameters must be strictly decreasing")
    if any(e <= 0.0 for _, e in pairs):
        raise InvalidData("errors must be positive")
    rows = []
    for i, (p, e) in enumerate(pairs):
        if i == 0:
            rows.append(ConvergenceRow(p, e, None))
        else:
            p0, e0 = pairs[i - 1]
            rows.append(ConvergenceRow(p, e, np.log(e0 / e) / np.log(p0 / p)))
    return ConvergenceTable(rows)


def mc_standard_error(values, mesh: Mesh | None = None) -> float:
    """Sample standard deviation / sqrt(M).

    1D input: per-sample scalars.  2D input (M, P): per-node standard errors,
    aggregated as the discrete L2 norm of the SE field (mesh required).
    """
    v = np.asarray(values, dtype=np.float64)
    m = v.shape[0] if v.ndim else 0
    if v.ndim not in (1, 2) or m < 2:
        raise InvalidData("need at least two per-sample values")
    se = v.std(axis=0, ddof=1) / np.sqrt(m)
    if v.ndim == 1:
        return float(se)
    if mesh is None:
        raise InvalidData("per-node standard errors need the mesh to aggregate")
    return discrete_norm(mesh, FieldVector(se, mesh), NormKind.L2)
