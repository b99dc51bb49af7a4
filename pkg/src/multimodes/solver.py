"""Multi-modes Monte Carlo driver and the brute-force reference solver.

Multi-modes run: assemble and factor the background stiffness once, then per
sample solve the mode recursion

    K0 u_0 = b(f_j),    K0 u_n = -K_eta(eta_j) u_{n-1}   (n = 1..N-1)

by reusing the stored factor, and average the epsilon-weighted partial sums
over samples.  The brute-force reference assembles and factors a fresh
matrix K(a0 + eps*eta_j) per sample and solves once.

The sample loop is embarrassingly parallel: samples are split into
contiguous chunks owned by workers, each chunk accumulates its own partial
sums in index order, and partials are merged in chunk order, so results are
bitwise reproducible for a fixed worker count (and agree to rounding across
worker counts).
"""

import time
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels as kernels
from .assembly import (
    FieldVector,
    QuadratureRule,
    SparseSpd,
    assemble_load_f,
    assemble_perturbation_matrix,
    assemble_stiffness,
    default_rule,
    norm_matrices,
)
from .errors import CoercivityViolation, InvalidData
from .mesh import Domain, Interval1D, Mesh, build_mesh_1d, build_mesh_2d
from .random_fields import draw_sample
from .sparse_direct import Factorization, OpCounters, factorize, solve_with_factors

__all__ = [
    "SolverConfig",
    "RunResult",
    "ModeSweep",
    "build_mesh",
    "solve_modes_one_sample",
    "run_multimode_mc",
    "run_bruteforce_mc",
    "run_mode_sweep",
    "eps_powers",
]


@dataclass(frozen=True)
class SolverConfig:
    """Inputs of the main algorithm: domain/mesh, epsilon, N, M, seed."""

    domain: Domain
    n_cells: int
    epsilon: float
    n_modes: int
    n_samples: int
    seed: int = 0
    a0: object = 1.0
    workers: int = 1
    variant: str = "multimodes"

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise InvalidData(f"epsilon={self.epsilon} must be >= 0")
        if self.n_modes < 1:
            raise InvalidData(f"n_modes={self.n_modes} must be >= 1")
        if self.n_samples < 1:
            raise InvalidData(f"n_samples={self.n_samples} must be >= 1")
        if self.workers < 1:
            raise InvalidData(f"workers={self.workers} must be >= 1")
        if self.variant not in ("multimodes", "bruteforce"):
            raise InvalidData(f"unknown solver variant {self.variant!r}")

    @property
    def epsilon_warning(self) -> bool:
        """True when epsilon is outside the proven convergence regime."""
        return self.epsilon >= 1.0


def build_mesh(config: SolverConfig) -> Mesh:
    if isinstance(config.domain, Interval1D):
        return build_mesh_1d(config.domain, config.n_cells)
    return build_mesh_2d(config.domain, config.n_cells)


def eps_powers(epsilon: float, n_modes: int) -> np.ndarray:
    """[1, eps, eps^2, ...] as the running product used by the accumulators."""
    out = np.empty(n_modes)
    out[0] = 1.0
    for n in range(1, n_modes):
        out[n] = out[n - 1] * epsilon
    return out


@dataclass(eq=False)
class RunResult:
    """Estimator output plus per-mode means, counters and timings."""

    psi: FieldVector
    phi: list
    mode_h1: np.ndarray
    psi_var: np.ndarray
    counters: OpCounters
    timings: dict
    n_samples: int
    epsilon: float
    variant: str
    diverged: int
    epsilon_warning: bool

    @property
    def mesh(self) -> Mesh:
        return self.psi.mesh

    def se_field(self) -> FieldVector:
        """Per-node Monte Carlo standard error of the estimator."""
        return FieldVector(np.sqrt(self.psi_var / self.n_samples), self.psi.mesh)


_GRAM_CACHE: "weakref.WeakKeyDictionary[Mesh, SparseSpd]" = weakref.WeakKeyDictionary()


def _h1_gram(mesh: Mesh) -> SparseSpd:
    """Mass + unit stiffness on one pattern: H1 norm as a single quadratic form."""
    gram = _GRAM_CACHE.get(mesh)
    if gram is None:
        mass, stiff = norm_matrices(mesh)
        gram = SparseSpd(mass.dim, mass.indptr, mass.indices,
                         mass.data + stiff.data)
        _GRAM_CACHE[mesh] = gram
    return gram


def _h1_norm(gram: SparseSpd, v: np.ndarray) -> float:
    return float(np.sqrt(v @ gram.matvec(v)))


def solve_modes_one_sample(fac: Factorization, k_eta: SparseSpd,
                           f_load: FieldVector, n_modes: int, epsilon: float,
                           counters: OpCounters | None = None):
    """Run the mode recursion for one sample.

    Returns (U, modes): the epsilon-weighted partial sum and the list of mode
    vectors.  Performs exactly n_modes solve pairs and n_modes - 1 matvecs.
    """
    if counters is None:
        counters = OpCounters()
    mesh = f_load.mesh
    u = solve_with_factors(fac, f_load, counters).values
    partial = u.copy()
    modes = [u]
    scale = 1.0
    for _ in range(1, n_modes):
        rhs = -kernels.csr_matvec(k_eta.indptr, k_eta.indices, k_eta.data, u)
        counters.matvecs += 1
        u = kernels.band_solve(fac.band, rhs)
        counters.triangular_solve_pairs += 1
        scale *= epsilon
        partial += scale * u
        modes.append(u)
    return FieldVector(partial, mesh), [FieldVector(m, mesh) for m in modes]


def _chunk_ranges(n_samples: int, workers: int) -> list:
    w = max(1, min(workers, n_samples))
    sizes = np.full(w, n_samples // w, dtype=np.int64)
    sizes[: n_samples % w] += 1
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(w)]


def _run_chunks(chunks, worker: Callable, workers: int) -> list:
    if len(chunks) == 1 or workers <= 1:
        return [worker(lo, hi) for lo, hi in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(worker, lo, hi) for lo, hi in chunks]
        return [f.result() for f in futures]


@dataclass(eq=False)
class _Accum:
    """Per-chunk partial sums, merged in chunk order."""

    psi_sum: np.ndarray
    psi_sq: np.ndarray
    phi_sums: np.ndarray
    h1_sums: np.ndarray
    cross: np.ndarray | None
    diverged: int
    counters: OpCounters
    t_assembly: float
    t_solves: float
    t_factor: float = 0.0


def _merge(accums: list) -> _Accum:
    total = accums[0]
    for acc in accums[1:]:
        total.psi_sum += acc.psi_sum
        total.psi_sq += acc.psi_sq
        total.phi_sums += acc.phi_sums
        total.h1_sums += acc.h1_sums
        if total.cross is not None:
            total.cross += acc.cross
        total.diverged += acc.diverged
        total.counters.merge(acc.counters)
        total.t_assembly += acc.t_assembly
        total.t_solves += acc.t_solves
        total.t_factor += acc.t_factor
    return total


def _variance(psi_sum: np.ndarray, psi_sq: np.ndarray, m: int) -> np.ndarray:
    if m < 2:
        return np.zeros_like(psi_sum)
    mean = psi_sum / m
    var = (psi_sq - m * mean * mean) / (m - 1)
    return np.clip(var, 0.0, None)


def run_multimode_mc(config: SolverConfig, eta_spec, f_spec) -> RunResult:
    """Main algorithm: one factorization, M*N reused triangular solves."""
    t_start = time.perf_counter()
    mesh = build_mesh(config)
    quad = default_rule(mesh.dim)
    gram = _h1_gram(mesh)
    counters = OpCounters()
    n, m, eps = config.n_modes, config.n_samples, config.epsilon

    t0 = time.perf_counter()
    k0 = assemble_stiffness(mesh, config.a0, quad, counters)
    t_assembly = time.perf_counter() - t0
    t0 = time.perf_counter()
    fac = factorize(k0, counters)
    t_factor = time.perf_counter() - t0

    def worker(lo: int, hi: int) -> _Accum:
        acc = _Accum(
            np.zeros(mesh.n_interior), np.zeros(mesh.n_interior),
            np.zeros((n, mesh.n_interior)), np.zeros(n), None, 0,
            OpCounters(), 0.0, 0.0,
        )
        for j in range(lo, hi):
            draw = draw_sample((eta_spec, f_spec), config.seed, j)
            t1 = time.perf_counter()
            b = assemble_load_f(mesh, draw.f, quad, acc.counters).values
            k_eta = assemble_perturbation_matrix(mesh, draw.eta, quad, acc.counters)
            t2 = time.perf_counter()
            acc.t_assembly += t2 - t1
            u = kernels.band_solve(fac.band, b)
            acc.counters.triangular_solve_pairs += 1
            partial = u.copy()
            acc.phi_sums[0] += u
            h1_first = _h1_norm(gram, u)
            acc.h1_sums[0] += h1_first
            scale = 1.0
            for mode in range(1, n):
                rhs = -kernels.csr_matvec(
                    k_eta.indptr, k_eta.indices, k_eta.data, u
                )
                acc.counters.matvecs += 1
                u = kernels.band_solve(fac.band, rhs)
                acc.counters.triangular_solve_pairs += 1
                scale *= eps
                partial += scale * u
                acc.phi_sums[mode] += u
                acc.h1_sums[mode] += _h1_norm(gram, u)
            acc.t_solves += time.perf_counter() - t2
            acc.psi_sum += partial
            acc.psi_sq += partial * partial
            if n > 1 and scale * _h1_norm(gram, u) > h1_first:
                acc.diverged += 1
        return acc

    total = _merge(_run_chunks(_chunk_ranges(m, config.workers), worker,
                               config.workers))
    counters.merge(total.counters)

    psi = FieldVector(total.psi_sum / m, mesh)
    phi = [FieldVector(total.phi_sums[i] / m, mesh) for i in range(n)]
    timings = {
        "factorization": t_factor,
        "assembly": t_assembly + total.t_assembly,
        "solves": total.t_solves,
        "total": time.perf_counter() - t_start,
    }
    return RunResult(
        psi, phi, total.h1_sums / m, _variance(total.psi_sum, total.psi_sq, m),
        counters, timings, m, eps, "multimodes", total.diverged,
        config.epsilon_warning,
    )


def run_bruteforce_mc(config: SolverConfig, eta_spec, f_spec) -> RunResult:
    """Classical MC reference: fresh assembly + factorization per sample.

    A sample whose realized coefficient a0 + eps*eta loses positivity aborts
    the whole run (skipping it would bias the estimator); the error names the
    sample index.
    """
    t_start = time.perf_counter()
    mesh = build_mesh(config)
    quad = default_rule(mesh.dim)
    gram = _h1_gram(mesh)
    m, eps, a0 = config.n_samples, config.epsilon, config.a0

    def worker(lo: int, hi: int) -> _Accum:
        acc = _Accum(
            np.zeros(mesh.n_interior), np.zeros(mesh.n_interior),
            np.zeros((1, mesh.n_interior)), np.zeros(1), None, 0,
            OpCounters(), 0.0, 0.0,
        )
        for j in range(lo, hi):
            draw = draw_sample((eta_spec, f_spec), config.seed, j)

            def coeff(*coords, _eta=draw.eta):
                base = a0(*coords) if callable(a0) else a0
                return base + eps * _eta(*coords)

            t1 = time.perf_counter()
            try:
                k = assemble_stiffness(mesh, coeff, quad, acc.counters)
            except CoercivityViolation as exc:
                raise CoercivityViolation(f"sample {j}: {exc}") from exc
            b = assemble_load_f(mesh, draw.f, quad, acc.counters).values
            t2 = time.perf_counter()
            acc.t_assembly += t2 - t1
            fac = factorize(k, acc.counters)
            t3 = time.perf_counter()
            acc.t_factor += t3 - t2
            u = kernels.band_solve(fac.band, b)
            acc.counters.triangular_solve_pairs += 1
            acc.t_solves += time.perf_counter() - t3
            acc.psi_sum += u
            acc.psi_sq += u * u
            acc.phi_sums[0] += u
            acc.h1_sums[0] += _h1_norm(gram, u)
        return acc

    total = _merge(_run_chunks(_chunk_ranges(m, config.workers), worker,
                               config.workers))
    psi = FieldVector(total.psi_sum / m, mesh)
    timings = {
        "factorization": total.t_factor,
        "assembly": total.t_assembly,
        "solves": total.t_solves,
        "total": time.perf_counter() - t_start,
    }
    return RunResult(
        psi, [psi], total.h1_sums / m, _variance(total.psi_sum, total.psi_sq, m),
        total.counters, timings, m, eps, "bruteforce", 0, config.epsilon_warning,
    )


@dataclass(eq=False)
class ModeSweep:
    """Unweighted mode statistics: one sweep serves every (epsilon, N) cell.

    The mode systems contain no epsilon, so per-mode means Phi_n and second
    moments over one shared sample set reconstruct the estimator and its MC
    variance for any epsilon and any N <= n_modes by reweighting.
    """

    mesh: Mesh
    n_modes: int
    n_samples: int
    phi_mean: np.ndarray  # (N, P)
    cross_mean: np.ndarray  # (N, N, P)
    mode_h1: np.ndarray
    counters: OpCounters
    timings: dict

    def psi_for(self, epsilon: float, n: int) -> FieldVector:
        p = eps_powers(epsilon, n)
        return FieldVector(p @ self.phi_mean[:n], self.mesh)

    def variance_for(self, epsilon: float, n: int) -> np.ndarray:
        if self.n_samples < 2:
            return np.zeros(self.mesh.n_interior)
        p = eps_powers(epsilon, n)
        second = np.einsum("a,b,abp->p", p, p, self.cross_mean[:n, :n])
        mean = p @ self.phi_mean[:n]
        m = self.n_samples
        return np.clip((second - mean * mean) * m / (m - 1), 0.0, None)

    def se_for(self, epsilon: float, n: int) -> np.ndarray:
        return np.sqrt(self.variance_for(epsilon, n) / self.n_samples)


def run_mode_sweep(config: SolverConfig, eta_spec, f_spec) -> ModeSweep:
    """Accumulate unweighted mode means and cross moments to n_modes."""
    t_start = time.perf_counter()
    mesh = build_mesh(config)
    quad = default_rule(mesh.dim)
    gram = _h1_gram(mesh)
    counters = OpCounters()
    n, m = config.n_modes, config.n_samples

    t0 = time.perf_counter()
    k0 = assemble_stiffness(mesh, config.a0, quad, counters)
    t_assembly = time.perf_counter() - t0
    t0 = time.perf_counter()
    fac = factorize(k0, counters)
    t_factor = time.perf_counter() - t0

    def worker(lo: int, hi: int) -> _Accum:
        acc = _Accum(
            np.zeros(mesh.n_interior), np.zeros(mesh.n_interior),
            np.zeros((n, mesh.n_interior)), np.zeros(n),
            np.zeros((n, n, mesh.n_interior)), 0, OpCounters(), 0.0, 0.0,
        )
        modes = np.empty((n, mesh.n_interior))
        for j in range(lo, hi):
            draw = draw_sample((eta_spec, f_spec), config.seed, j)
            t1 = time.perf_counter()
            b = assemble_load_f(mesh, draw.f, quad, acc.counters).values
            k_eta = assemble_perturbation_matrix(mesh, draw.eta, quad, acc.counters)
            t2 = time.perf_counter()
            acc.t_assembly += t2 - t1
            u = kernels.band_solve(fac.band, b)
            acc.counters.triangular_solve_pairs += 1
            modes[0] = u
            for mode in range(1, n):
                rhs = -kernels.csr_matvec(
                    k_eta.indptr, k_eta.indices, k_eta.data, u
                )
                acc.counters.matvecs += 1
                u = kernels.band_solve(fac.band, rhs)
                acc.counters.triangular_solve_pairs += 1
                modes[mode] = u
            acc.t_solves += time.perf_counter() - t2
            acc.phi_sums += modes
            acc.cross += modes[:, None, :] * modes[None, :, :]
            for mode in range(n):
                acc.h1_sums[mode] += _h1_norm(gram, modes[mode])
        return acc

    total = _merge(_run_chunks(_chunk_ranges(m, config.workers), worker,
                               config.workers))
    counters.merge(total.counters)
    timings = {
        "factorization": t_factor,
        "assembly": t_assembly + total.t_assembly,
        "solves": total.t_solves,
        "total": time.perf_counter() - t_start,
    }
    return ModeSweep(mesh, n, m, total.phi_sums / m, total.cross / m,
                     total.h1_sums / m, counters, timings)
