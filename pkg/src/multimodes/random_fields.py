"""Random input fields: perturbation eta, source f, and KL weak-forming.

Randomness is counter-based and splittable: every draw comes from a Philox
stream keyed by (seed, sample index, variable id), so a draw is a pure
function of those three values regardless of execution order or worker
count.  The variable id identifies the random variable, not the slot it is
used in: passing the same (value-equal) spec for eta and f makes them share
one stream and hence one realization (the 1D experiment drives both with a
single scalar Y), while distinct specs get independent streams.

Uniform variables use standard scaling of the unit stream; normal variables
use the inverse-CDF transform (scipy.special.ndtri) on it.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import ndtri

from .errors import DegenerateField, KernelError
from .mesh import Domain, Interval1D, Rect2D

__all__ = [
    "ScalarUniform",
    "TrigSeriesEta2D",
    "TrigSeriesF2D",
    "Deterministic",
    "KLField",
    "SampleDraw",
    "draw_sample",
    "realize_field",
    "eval_eta_2d",
    "eval_f_2d",
    "trig_eta_bound",
    "ExpAbs",
    "TabulatedKernel",
    "KLDecomposition",
    "kl_decompose",
    "WeakForm",
    "kl_to_weak_form",
]

_MASK64 = (1 << 64) - 1
_MASK56 = (1 << 56) - 1


# --------------------------------------------------------------------------
# Field specifications
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarUniform:
    """A single uniform random variable used as a spatially constant field."""

    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty uniform range [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class TrigSeriesEta2D:
    """Cosine series perturbation on (0,2)^2 with uniform [-1,1] coordinates."""

    m_max: int = 10
    n_max: int = 10
    decay: float = 0.2
    base: float = 0.5
    amplitude: float = 0.5

    def __post_init__(self):
        if self.m_max < 1 or self.n_max < 1:
            raise ValueError("series index bounds must be >= 1")


@dataclass(frozen=True)
class TrigSeriesF2D:
    """Sine series source around x1^2 + x2^2 with standard normal coordinates."""

    m_max: int = 5
    n_max: int = 5
    decay: float = 0.2
    amplitude: float = 2.0

    def __post_init__(self):
        if self.m_max < 1 or self.n_max < 1:
            raise ValueError("series index bounds must be >= 1")


@dataclass(frozen=True)
class Deterministic:
    """A fixed field; fn is a callable of the coordinates or a number."""

    fn: object


# --------------------------------------------------------------------------
# Counter-based streams
# --------------------------------------------------------------------------

def _stream(seed: int, j: int, var_id: int) -> np.random.Generator:
    key = ((int(seed) & _MASK64) << 64) | ((int(j) & _MASK56) << 8) | var_id
    return np.random.Generator(np.random.Philox(key=key))


def _normals(gen: np.random.Generator, shape) -> np.ndarray:
    u = gen.random(shape)
    # gen.random() can return exactly 0, where the inverse CDF is -inf.
    return ndtri(np.maximum(u, 2.0 ** -53))


def _draw_coords(spec, seed: int, j: int, var_id: int):
    if isinstance(spec, Deterministic):
        return None
    gen = _stream(seed, j, var_id)
    if isinstance(spec, ScalarUniform):
        return float(spec.lo + (spec.hi - spec.lo) * gen.random())
    if isinstance(spec, TrigSeriesEta2D):
        return 2.0 * gen.random((spec.m_max, spec.n_max)) - 1.0
    if isinstance(spec, TrigSeriesF2D):
        return _normals(gen, (spec.m_max, spec.n_max))
    if isinstance(spec, KLField):
        if spec.law == "normal":
            return _normals(gen, spec.k_max)
        if spec.law == "uniform":
            root3 = np.sqrt(3.0)  # U[-sqrt(3), sqrt(3)] has unit variance
            return root3 * (2.0 * gen.random(spec.k_max) - 1.0)
        raise ValueError(f"unknown coordinate law {spec.law!r}")
    raise TypeError(f"not a random field spec: {spec!r}")


# --------------------------------------------------------------------------
# Realized fields
# --------------------------------------------------------------------------

def _broadcast_eval(x1, x2, series):
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    shape = np.broadcast_shapes(x1.shape, x2.shape)
    p1 = np.broadcast_to(x1, shape).ravel()
    p2 = np.broadcast_to(x2, shape).ravel()
    out = series(p1, p2).reshape(shape)
    if shape == ():
        return float(out)
    return out


def eval_eta_2d(coords: np.ndarray, x1, x2, *, decay: float = 0.2,
                base: float = 0.5, amplitude: float = 0.5):
    """Evaluate base + amplitude * sum of decaying cosine modes at points."""
    coords = np.asarray(coords, dtype=np.float64)
    m = np.arange(1, coords.shape[0] + 1)
    n = np.arange(1, coords.shape[1] + 1)
    w = np.exp(-decay * (m[:, None] ** 2 + n[None, :] ** 2)) * coords

    def series(p1, p2):
        c1 = np.cos(np.pi * np.outer(p1 - 1.0, m))
        c2 = np.cos(np.pi * np.outer(p2 - 1.0, n))
        return base + amplitude * np.einsum("pn,pn->p", c1 @ w, c2)

    return _broadcast_eval(x1, x2, series)


def eval_f_2d(coords: np.ndarray, x1, x2, *, decay: float = 0.2,
              amplitude: float = 2.0):
    """Evaluate x1^2 + x2^2 + amplitude * sum of decaying sine modes."""
    coords = np.asarray(coords, dtype=np.float64)
    m = np.arange(1, coords.shape[0] + 1)
    n = np.arange(1, coords.shape[1] + 1)
    w = amplitude * np.exp(-decay * (m[:, None] ** 2 + n[None, :] ** 2)) * coords

    def series(p1, p2):
        s1 = np.sin(np.pi * np.outer(p1 - 1.0, m))
        s2 = np.sin(np.pi * np.outer(p2 - 1.0, n))
        return p1 ** 2 + p2 ** 2 + np.einsum("pm,mn,pn->p", s1, w, s2)

    return _broadcast_eval(x1, x2, series)


def trig_eta_bound(spec: TrigSeriesEta2D) -> tuple[float, float]:
    """Almost-sure bounds of the realized perturbation (coefficient sum)."""
    m = np.arange(1, spec.m_max + 1)
    n = np.arange(1, spec.n_max + 1)
    s = float(np.exp(-spec.decay * (m[:, None] ** 2 + n[None, :] ** 2)).sum())
    return spec.base - spec.amplitude * s, spec.base + spec.amplitude * s


def _constant_field(value: float) -> Callable:
    def fn(*coords):
        return np.full(np.shape(coords[0]), value, dtype=np.float64)

    return fn


def realize_field(spec, coords) -> Callable:
    """Turn (spec, drawn coordinates) into an evaluable coefficient field."""
    if isinstance(spec, Deterministic):
        return spec.fn if callable(spec.fn) else _constant_field(float(spec.fn))
    if isinstance(spec, ScalarUniform):
        return _constant_field(float(coords))
    if isinstance(spec, TrigSeriesEta2D):
        return lambda x1, x2: eval_eta_2d(
            coords, x1, x2, decay=spec.decay, base=spec.base,
            amplitude=spec.amplitude,
        )
    if isinstance(spec, TrigSeriesF2D):
        return lambda x1, x2: eval_f_2d(
            coords, x1, x2, decay=spec.decay, amplitude=spec.amplitude,
        )
    if isinstance(spec, KLField):
        return spec._realize(np.asarray(coords, dtype=np.float64))
    raise TypeError(f"not a random field spec: {spec!r}")


@dataclass(eq=False)
class SampleDraw:
    """One realized sample: drawn coordinates plus evaluable fields."""

    j: int
    eta_coords: object
    f_coords: object
    eta: Callable
    f: Callable


def draw_sample(specs, seed: int, j: int) -> SampleDraw:
    """Realize sample j of the (eta, f) spec pair from the keyed streams.

    Identical (seed, j) always produce the identical draw.  If the two specs
    are equal they denote the same random variable and share the draw.
    """
    eta_spec, f_spec = specs
    eta_coords = _draw_coords(eta_spec, seed, j, 0)
    if f_spec == eta_spec:
        f_coords = eta_coords
    else:
        f_coords = _draw_coords(f_spec, seed, j, 1)
    return SampleDraw(
        j,
        eta_coords,
        f_coords,
        realize_field(eta_spec, eta_coords),
        realize_field(f_spec, f_coords),
    )


# --------------------------------------------------------------------------
# Covariance kernels and Karhunen-Loeve weak-forming
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpAbs:
    """C(x, y) = exp(-|x-y|^m / ell) for m in {1, 2}.

    The literature's standard decaying form; C(x, x) = 1.
    """

    m: int = 1
    ell: float = 0.5

    def __post_init__(self):
        if self.m not in (1, 2):
            raise KernelError(f"ExpAbs exponent m={self.m}: expected 1 or 2")
        if not 0.0 < self.ell < 1.0:
            raise KernelError(f"correlation length {self.ell} outside (0, 1)")

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Kernel matrix between point sets (na, dim) and (nb, dim)."""
        d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
        return np.exp(-(d ** self.m) / self.ell)

    def row_integral_1d(self, x: np.ndarray, lo: float, hi: float) -> np.ndarray:
        """Exact integral of C(x, .) over (lo, hi); m=1 only."""
        if self.m != 1:
            raise KernelError("closed-form row integral only for m=1")
        return self.ell * (
            2.0 - np.exp(-(x - lo) / self.ell) - np.exp(-(hi - x) / self.ell)
        )


@dataclass(eq=False)
class TabulatedKernel:
    """Covariance matrix tabulated at the decomposition nodes."""

    matrix: np.ndarray


def _kl_nodes(domain: Domain, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    if isinstance(domain, Interval1D):
        half = 0.5 * (domain.x_hi - domain.x_lo)
        nodes = (domain.x_lo + half * (x + 1.0))[:, None]
        return nodes, half * w
    # Rect2D: tensor grid, n_nodes per direction.
    hx = 0.5 * (domain.x_hi - domain.x_lo)
    hy = 0.5 * (domain.y_hi - domain.y_lo)
    gx = domain.x_lo + hx * (x + 1.0)
    gy = domain.y_lo + hy * (x + 1.0)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    weights = (hx * w)[:, None] * (hy * w)[None, :]
    return nodes, weights.ravel()


@dataclass(eq=False)
class KLDecomposition:
    """Nystrom eigenpairs of a covariance operator.

    lambdas/phi hold the leading k_max eigenpairs (descending, clipped at 0,
    quadrature-weighted orthonormal); spectrum is the full computed
    eigenvalue list of the discretized operator.
    """

    lambdas: np.ndarray
    phi: np.ndarray  # (k_max, n_nodes)
    nodes: np.ndarray  # (n_nodes, dim)
    weights: np.ndarray
    spectrum: np.ndarray
    kernel: object
    domain: Domain
    corrected: bool

    @property
    def k_max(self) -> int:
        return len(self.lambdas)

    def eval_modes(self, points: np.ndarray) -> np.ndarray:
        """Eigenfunctions at arbitrary points, shape (k_max, npts).

        Uses the Nystrom extension for evaluable kernels (consistent with the
        diagonal correction, so nodal values are reproduced exactly) and
        linear interpolation for tabulated kernels.
        """
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        if isinstance(self.kernel, TabulatedKernel):
            if points.shape[1] != 1:
                raise KernelError("tabulated kernels interpolate in 1D only")
            xn = self.nodes[:, 0]
            return np.vstack(
                [np.interp(points[:, 0], xn, mode) for mode in self.phi]
            )
        cross = self.kernel.pairwise(points, self.nodes)  # (npts, n_nodes)
        num = cross @ (self.weights[None, :] * self.phi).T  # (npts, k_max)
        if self.corrected:
            corr = self.kernel.row_integral_1d(
                points[:, 0], self.domain.x_lo, self.domain.x_hi
            ) - cross @ self.weights
            denom = self.lambdas[None, :] - corr[:, None]
        else:
            denom = np.broadcast_to(self.lambdas[None, :], num.shape)
        out = np.zeros_like(num)
        ok = self.lambdas > 0.0
        out[:, ok] = num[:, ok] / denom[:, ok]
        return out.T


def kl_decompose(kernel, domain: Domain, n_nodes: int, k_max: int,
                 diagonal_correction: bool | None = None) -> KLDecomposition:
    """Quadrature-weighted symmetric eigendecomposition of the kernel.

    Gauss-Legendre nodes (per direction on a rectangle).  For the m=1
    exponential kernel in 1D the classical diagonal singularity subtraction
    is applied by default: the kernel's kink on the diagonal otherwise limits
    eigenvalue accuracy to O(n^-2).  With the correction the computed
    spectrum no longer carries the operator's unresolved tail, so its sum
    falls short of |D| by roughly sum of lambda_k for k > n_nodes; pass
    diagonal_correction=False to retain the exact-trace discretization.
    """
    nodes, weights = _kl_nodes(domain, n_nodes)
    total = len(nodes)
    if not 1 <= k_max <= total:
        raise ValueError(f"k_max={k_max} outside 1..{total}")

    if isinstance(kernel, TabulatedKernel):
        c = np.asarray(kernel.matrix, dtype=np.float64)
        if c.shape != (total, total):
            raise KernelError(
                f"tabulated kernel shape {c.shape} != ({total}, {total})"
            )
        scale = max(1.0, float(np.abs(c).max()))
        if not np.allclose(c, c.T, rtol=0.0, atol=1e-12 * scale):
            raise KernelError("tabulated kernel matrix is not symmetric")
        c = 0.5 * (c + c.T)
        can_correct = False
    else:
        c = kernel.pairwise(nodes, nodes)
        can_correct = kernel.m == 1 and isinstance(domain, Interval1D)

    if diagonal_correction is None:
        diagonal_correction = can_correct
    elif diagonal_correction and not can_correct:
        raise KernelError("diagonal correction needs the 1D m=1 kernel")

    sw = np.sqrt(weights)
    b = sw[:, None] * c * sw[None, :]
    if diagonal_correction:
        row_exact = kernel.row_integral_1d(
            nodes[:, 0], domain.x_lo, domain.x_hi
        )
        b = b + np.diag(row_exact - c @ weights)

    mu, vecs = np.linalg.eigh(b)
    order = np.argsort(mu)[::-1]
    spectrum = mu[order]
    lambdas = np.clip(spectrum[:k_max], 0.0, None)
    phi = (vecs[:, order[:k_max]] / sw[:, None]).T
    peak = np.argmax(np.abs(phi), axis=1)
    signs = np.sign(phi[np.arange(k_max), peak])
    signs[signs == 0.0] = 1.0
    phi = phi * signs[:, None]
    return KLDecomposition(
        lambdas, phi, nodes, weights, spectrum, kernel, domain,
        bool(diagonal_correction),
    )


@dataclass(frozen=True)
class KLField:
    """Unit-magnitude KL perturbation zeta = sum sqrt(lk/l1) phi_k xi_k."""

    decomposition: KLDecomposition
    k_max: int
    law: str = "normal"

    def coefficients(self) -> np.ndarray:
        lam = self.decomposition.lambdas[: self.k_max]
        return np.sqrt(lam / lam[0])

    def _realize(self, xi: np.ndarray) -> Callable:
        weights = self.coefficients() * xi

        def field(*coords):
            pts = np.column_stack([np.ravel(np.asarray(c, float)) for c in coords])
            modes = self.decomposition.eval_modes(pts)[: self.k_max]
            vals = weights @ modes
            return vals.reshape(np.shape(coords[0]))

        return field


class WeakForm(NamedTuple):
    a0: object
    epsilon: float
    eta_spec: KLField


def kl_to_weak_form(mean, decomposition: KLDecomposition,
                    k_max: int | None = None, law: str = "normal") -> WeakForm:
    """Rewrite a KL field as mean + epsilon * zeta with epsilon = sqrt(l1).

    Recombining mean + epsilon * zeta reproduces the truncated KL sum
    mean + sum sqrt(lk) phi_k xi_k exactly for the same draw.
    """
    if k_max is None:
        k_max = decomposition.k_max
    if not 1 <= k_max <= decomposition.k_max:
        raise ValueError(f"k_max={k_max} outside 1..{decomposition.k_max}")
    lam1 = float(decomposition.lambdas[0])
    if not lam1 > 0.0:
        raise DegenerateField(f"leading eigenvalue {lam1} is not positive")
    return WeakForm(mean, float(np.sqrt(lam1)),
                    KLField(decomposition, k_max, law))
