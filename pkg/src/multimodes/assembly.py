"""P1 finite element assembly with quadrature for varying coefficients.

Coefficient and source fields are callables taking coordinate arrays
(``f(x)`` in 1D, ``f(x, y)`` in 2D) and returning values broadcast to the
point count; plain numbers are accepted as constant fields.  Per-mesh
geometry (gradients, quadrature points, scatter maps) is computed once and
cached, so repeated per-sample assemblies reduce to a field evaluation, a
weighted reduction and one scatter-add.
"""

import weakref
from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .errors import CoercivityViolation, FieldEvaluationError, ShapeError
from .mesh import Mesh

__all__ = [
    "QuadratureRule",
    "gauss_legendre_1d",
    "triangle_rule",
    "default_rule",
    "error_rule",
    "SparseSpd",
    "FieldVector",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_load_f",
    "assemble_perturbation_matrix",
    "mode_rhs",
    "norm_matrices",
]


@dataclass(eq=False)
class QuadratureRule:
    """Reference-element rule: weights sum to the reference measure."""

    points: np.ndarray  # (nq, dim) reference coordinates
    weights: np.ndarray  # (nq,)
    degree: int


def gauss_legendre_1d(n_points: int) -> QuadratureRule:
    """Gauss-Legendre rule mapped to the reference segment [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n_points)
    return QuadratureRule(0.5 * (x[:, None] + 1.0), 0.5 * w, 2 * n_points - 1)


# Symmetric triangle rules (Dunavant); orbit weights are normalized to sum to
# 1 over the reference triangle, so they are halved to match its measure.
_TRI_DEG4 = (
    (0.445948490915965, 0.223381589678011),
    (0.091576213509771, 0.109951743655322),
)
_TRI_DEG6_3 = (
    (0.063089014491502, 0.050844906370207),
    (0.249286745170910, 0.116786275726379),
)
_TRI_DEG6_6 = (0.053145049844816, 0.310352451033785, 0.082851075618374)


def triangle_rule(degree: int) -> QuadratureRule:
    """Symmetric rule on the reference triangle, exact to `degree` (4 or 6)."""
    pts, ws = [], []
    if degree <= 4:
        for b, w in _TRI_DEG4:
            a = 1.0 - 2.0 * b
            pts += [(a, b), (b, a), (b, b)]
            ws += [0.5 * w] * 3
        deg = 4
    elif degree <= 6:
        for b, w in _TRI_DEG6_3:
            a = 1.0 - 2.0 * b
            pts += [(a, b), (b, a), (b, b)]
            ws += [0.5 * w] * 3
        a, b, w = _TRI_DEG6_6
        c = 1.0 - a - b
        pts += [(a, b), (b, a), (a, c), (c, a), (b, c), (c, b)]
        ws += [0.5 * w] * 6
        deg = 6
    else:
        raise ValueError(f"no triangle rule of degree {degree}")
    return QuadratureRule(np.array(pts), np.array(ws), deg)


_ASSEMBLY_RULES = {1: gauss_legendre_1d(3), 2: triangle_rule(4)}
_ERROR_RULES = {1: gauss_legendre_1d(5), 2: triangle_rule(6)}


def default_rule(dim: int) -> QuadratureRule:
    """Assembly rule: 3-point Gauss in 1D, 6-point degree-4 per triangle."""
    return _ASSEMBLY_RULES[dim]


def error_rule(dim: int) -> QuadratureRule:
    """Higher-order rule used for errors against closed-form fields."""
    return _ERROR_RULES[dim]


@dataclass(eq=False)
class SparseSpd:
    """Symmetric matrix over interior DOFs in CSR form (full storage).

    The SPD property is not asserted here; assembly guarantees it for
    positive coefficients and factorization verifies it by construction.
    """

    dim: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    symmetric: bool = True

    @property
    def nnz(self) -> int:
        return len(self.data)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if len(x) != self.dim:
            raise ShapeError(f"vector length {len(x)} != matrix dim {self.dim}")
        return kernels.csr_matvec(self.indptr, self.indices, self.data, x)

    def toarray(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for i in range(self.dim):
            sl = slice(self.indptr[i], self.indptr[i + 1])
            out[i, self.indices[sl]] = self.data[sl]
        return out

    def scaled(self, alpha: float) -> "SparseSpd":
        """Same pattern, data multiplied by alpha (shares index arrays)."""
        return SparseSpd(self.dim, self.indptr, self.indices, alpha * self.data,
                         self.symmetric)


@dataclass(eq=False)
class FieldVector:
    """Nodal coefficients of a P1 function on the interior DOFs of a mesh."""

    values: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.n_interior,):
            raise ShapeError(
                f"vector shape {self.values.shape} != ({self.mesh.n_interior},)"
            )
        if not np.all(np.isfinite(self.values)):
            raise FieldEvaluationError("non-finite entries in field vector")

    def copy(self) -> "FieldVector":
        return FieldVector(self.values.copy(), self.mesh)


class _Plan:
    """Per-(mesh, rule) geometry and scatter maps reused by every assembly."""

    def __init__(self, mesh: Mesh, quad: QuadratureRule):
        self.mesh = mesh
        self.quad = quad
        pts = mesh.vertices[mesh.elements]  # (ne, nloc, dim)
        ne, nloc, dim = pts.shape
        ref = quad.points  # (nq, dim)
        nq = len(ref)

        if dim == 1:
            h = pts[:, 1, 0] - pts[:, 0, 0]
            det = h
            grads = np.stack([-1.0 / h, 1.0 / h], axis=1)[:, :, None]
            basis = np.column_stack([1.0 - ref[:, 0], ref[:, 0]])
            phys = pts[:, None, 0, :] + ref[None, :, :] * h[:, None, None]
        else:
            v0 = pts[:, 0]
            e1 = pts[:, 1] - v0
            e2 = pts[:, 2] - v0
            det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            g2 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
            g3 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
            grads = np.stack([-g2 - g3, g2, g3], axis=1)
            basis = np.column_stack([1.0 - ref.sum(axis=1), ref[:, 0], ref[:, 1]])
            phys = (
                v0[:, None, :]
                + ref[None, :, 0, None] * e1[:, None, :]
                + ref[None, :, 1, None] * e2[:, None, :]
            )

        self.wdet = quad.weights[None, :] * det[:, None]  # (ne, nq)
        self.grads = grads  # (ne, nloc, dim)
        self.gg = np.einsum("eid,ejd->eij", grads, grads)  # (ne, nloc, nloc)
        self.basis = basis  # (nq, nloc)
        self.phys_flat = phys.reshape(ne * nq, dim)
        self.n_elements, self.n_local, self.n_quad = ne, nloc, nq

        dofs = mesh.interior_dof[mesh.elements]  # (ne, nloc)
        gi = np.repeat(dofs, nloc, axis=1).reshape(ne, nloc, nloc)
        gj = np.tile(dofs, (1, nloc)).reshape(ne, nloc, nloc)
        keep = (gi >= 0) & (gj >= 0)
        self.pair_sel = np.flatnonzero(keep.ravel())
        self.pair_elem = np.repeat(np.arange(ne), nloc * nloc)[self.pair_sel]
        rows = gi.ravel()[self.pair_sel]
        cols = gj.ravel()[self.pair_sel]
        n = mesh.n_interior
        keys = rows * n + cols
        uniq = np.unique(keys)
        self.pair_pos = np.searchsorted(uniq, keys)
        self.indices = (uniq % n).astype(np.int64)
        csr_rows = uniq // n
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.indptr, csr_rows + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)
        self.nnz = len(uniq)

        lkeep = dofs.ravel() >= 0
        self.load_sel = np.flatnonzero(lkeep)
        self.load_pos = dofs.ravel()[self.load_sel].astype(np.int64)

        self.gg_pairs = self.gg.ravel()[self.pair_sel]
        self.mass_pairs = np.einsum(
            "eq,qi,qj->eij", self.wdet, basis, basis
        ).ravel()[self.pair_sel]


_PLANS: "weakref.WeakKeyDictionary[Mesh, dict]" = weakref.WeakKeyDictionary()


def _plan(mesh: Mesh, quad: QuadratureRule | None) -> _Plan:
    if quad is None:
        quad = default_rule(mesh.dim)
    per_mesh = _PLANS.setdefault(mesh, {})
    plan = per_mesh.get(id(quad))
    if plan is None:
        plan = _Plan(mesh, quad)
        per_mesh[id(quad)] = plan
    return plan


def eval_field(field, points: np.ndarray):
    """Evaluate a scalar field (callable or number) at (npts, dim) points."""
    if callable(field):
        vals = field(*(points[:, d] for d in range(points.shape[1])))
    else:
        vals = float(field)
    vals = np.broadcast_to(np.asarray(vals, dtype=np.float64), (len(points),))
    if not np.all(np.isfinite(vals)):
        raise FieldEvaluationError("field evaluated to a non-finite value")
    return vals


def _coefficient_sums(plan: _Plan, field) -> np.ndarray:
    """Per-element integral of the coefficient (P1 gradients are constant)."""
    c = eval_field(field, plan.phys_flat).reshape(plan.n_elements, plan.n_quad)
    return np.einsum("eq,eq->e", plan.wdet, c)


def _scatter_matrix(plan: _Plan, pair_vals: np.ndarray) -> SparseSpd:
    data = np.zeros(plan.nnz)
    kernels.scatter_add(data, plan.pair_pos, pair_vals)
    return SparseSpd(plan.mesh.n_interior, plan.indptr, plan.indices, data)


def assemble_stiffness(mesh: Mesh, coeff, quad: QuadratureRule | None = None,
                       counters=None) -> SparseSpd:
    """Stiffness matrix of the form (coeff grad u, grad v) over interior DOFs.

    The coefficient must be strictly positive at every quadrature point;
    otherwise the uniform-coercivity assumption is broken for this sample and
    CoercivityViolation is raised.
    """
    plan = _plan(mesh, quad)
    c = eval_field(coeff, plan.phys_flat)
    cmin = float(c.min())
    if cmin <= 0.0:
        raise CoercivityViolation(
            f"coefficient minimum {cmin:g} <= 0 at a quadrature point"
        )
    s = np.einsum("eq,eq->e", plan.wdet, c.reshape(plan.n_elements, plan.n_quad))
    out = _scatter_matrix(plan, plan.gg_pairs * s[plan.pair_elem])
    if counters is not None:
        counters.assemblies += 1
    return out


def assemble_perturbation_matrix(mesh: Mesh, eta_sample,
                                 quad: QuadratureRule | None = None,
                                 counters=None) -> SparseSpd:
    """Like assemble_stiffness but for a sign-indefinite coefficient."""
    plan = _plan(mesh, quad)
    s = _coefficient_sums(plan, eta_sample)
    out = _scatter_matrix(plan, plan.gg_pairs * s[plan.pair_elem])
    if counters is not None:
        counters.assemblies += 1
    return out


def assemble_mass(mesh: Mesh, quad: QuadratureRule | None = None,
                  counters=None) -> SparseSpd:
    """Mass matrix (u, v); exact for P1 with the default rules."""
    plan = _plan(mesh, quad)
    out = _scatter_matrix(plan, plan.mass_pairs)
    if counters is not None:
        counters.assemblies += 1
    return out


def assemble_load_f(mesh: Mesh, f_sample, quad: QuadratureRule | None = None,
                    counters=None) -> FieldVector:
    """Load vector with entries integral of f * phi_i."""
    plan = _plan(mesh, quad)
    f = eval_field(f_sample, plan.phys_flat).reshape(plan.n_elements, plan.n_quad)
    contrib = np.einsum("eq,eq,qi->ei", plan.wdet, f, plan.basis)
    b = np.zeros(mesh.n_interior)
    kernels.scatter_add(b, plan.load_pos, contrib.ravel()[plan.load_sel])
    if counters is not None:
        counters.assemblies += 1
    return FieldVector(b, mesh)


def mode_rhs(k_eta: SparseSpd, prev_mode: FieldVector, counters=None) -> FieldVector:
    """Right-hand side -K_eta u_{n-1} of the mode recursion."""
    if k_eta.dim != len(prev_mode.values):
        raise ShapeError(
            f"matrix dim {k_eta.dim} != vector length {len(prev_mode.values)}"
        )
    y = -k_eta.matvec(prev_mode.values)
    if counters is not None:
        counters.matvecs += 1
    return FieldVector(y, prev_mode.mesh)


_NORM_CACHE: "weakref.WeakKeyDictionary[Mesh, tuple]" = weakref.WeakKeyDictionary()


def norm_matrices(mesh: Mesh) -> tuple[SparseSpd, SparseSpd]:
    """(mass, unit-coefficient stiffness) pair used by the discrete norms."""
    cached = _NORM_CACHE.get(mesh)
    if cached is None:
        cached = (assemble_mass(mesh), assemble_stiffness(mesh, 1.0))
        _NORM_CACHE[mesh] = cached
    return cached
