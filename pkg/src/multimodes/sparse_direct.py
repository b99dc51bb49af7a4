"""Banded Cholesky factorization with reusable triangular solves.

The structured meshes produce band matrices under the natural (1D) and
row-major grid (2D) DOF orderings, so a profile factorization needs no fill
outside the band and no external ordering package.  A factorization is
immutable; every solve is a forward+backward substitution pair against the
stored factor, counted by OpCounters so the reuse contract (one
factorization, M*N solve pairs per multi-modes run) can be asserted exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .assembly import FieldVector, SparseSpd
from .errors import NotPositiveDefinite, ShapeError

__all__ = ["OpCounters", "Factorization", "factorize", "solve_with_factors"]


@dataclass
class OpCounters:
    """Operation counts for the complexity contract (monotone within a run)."""

    factorizations: int = 0
    triangular_solve_pairs: int = 0
    matvecs: int = 0
    assemblies: int = 0

    def merge(self, other: "OpCounters") -> None:
        self.factorizations += other.factorizations
        self.triangular_solve_pairs += other.triangular_solve_pairs
        self.matvecs += other.matvecs
        self.assemblies += other.assemblies

    def as_dict(self) -> dict:
        return {
            "factorizations": self.factorizations,
            "solve_pairs": self.triangular_solve_pairs,
            "matvecs": self.matvecs,
            "assemblies": self.assemblies,
        }


@dataclass(eq=False)
class Factorization:
    """Lower band Cholesky factor; band[j, k] holds L[j+k, j]."""

    dim: int
    bandwidth: int
    band: np.ndarray
    ordering: np.ndarray = field(repr=False)
    fill_nnz: int = 0


def _to_band(k: SparseSpd) -> tuple[np.ndarray, int]:
    rows = np.repeat(np.arange(k.dim, dtype=np.int64), np.diff(k.indptr))
    cols = k.indices
    bw = int(np.max(np.abs(rows - cols))) if k.nnz else 0
    ab = np.zeros((k.dim, bw + 1))
    lower = cols <= rows
    ab[cols[lower], rows[lower] - cols[lower]] = k.data[lower]
    return ab, bw


def factorize(k: SparseSpd, counters: OpCounters | None = None) -> Factorization:
    """Factor an SPD matrix once; raises NotPositiveDefinite on breakdown."""
    if not k.symmetric:
        raise NotPositiveDefinite("matrix not flagged symmetric")
    ab, bw = _to_band(k)
    try:
        fac = kernels.band_cholesky(ab)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    valid = (np.arange(k.dim)[:, None] + np.arange(bw + 1)[None, :]) < k.dim
    fill = int(np.count_nonzero(fac[valid]))
    if counters is not None:
        counters.factorizations += 1
    return Factorization(k.dim, bw, fac, np.arange(k.dim), fill)


def solve_with_factors(fac: Factorization, rhs, counters: OpCounters | None = None):
    """Solve K x = rhs by one forward/backward substitution pair.

    Accepts a FieldVector (returned as FieldVector) or a plain array.
    """
    values = rhs.values if isinstance(rhs, FieldVector) else np.asarray(rhs, float)
    if values.shape != (fac.dim,):
        raise ShapeError(f"rhs shape {values.shape} != ({fac.dim},)")
    x = kernels.band_solve(fac.band, values)
    if counters is not None:
        counters.triangular_solve_pairs += 1
    if isinstance(rhs, FieldVector):
        return FieldVector(x, rhs.mesh)
    return x
