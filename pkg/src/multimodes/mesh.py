"""Structured meshes of the interval and the axis-aligned rectangle.

P1 elements with homogeneous Dirichlet boundaries: boundary vertices are
eliminated and interior vertices carry contiguous degrees of freedom.
Meshes are immutable after construction and safe to share across workers.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidMesh

__all__ = [
    "Interval1D",
    "Rect2D",
    "Mesh",
    "build_mesh_1d",
    "build_mesh_2d",
    "element_diameters",
    "meshes_compatible",
]


@dataclass(frozen=True)
class Interval1D:
    x_lo: float
    x_hi: float

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise InvalidMesh(f"empty interval ({self.x_lo}, {self.x_hi})")

    @property
    def dim(self) -> int:
        return 1

    @property
    def measure(self) -> float:
        return self.x_hi - self.x_lo


@dataclass(frozen=True)
class Rect2D:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise InvalidMesh("empty rectangle")

    @property
    def dim(self) -> int:
        return 2

    @property
    def measure(self) -> float:
        return (self.x_hi - self.x_lo) * (self.y_hi - self.y_lo)


Domain = Interval1D | Rect2D


@dataclass(eq=False)
class Mesh:
    """Simplicial mesh with interior-DOF numbering.

    vertices: (n_vertices, dim); elements: (n_elements, dim+1) vertex indices
    (triangles uniformly counterclockwise); interior_dof maps vertex index to
    its contiguous interior DOF, -1 on the boundary; h is the maximum element
    diameter; p_per_dir is the number of grid points per direction.
    """

    domain: Domain
    vertices: np.ndarray
    elements: np.ndarray
    is_boundary: np.ndarray
    interior_dof: np.ndarray
    h: float
    p_per_dir: int
    n_interior: int = field(init=False)

    def __post_init__(self):
        self.n_interior = int(np.count_nonzero(~self.is_boundary))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def interior_points(self) -> np.ndarray:
        """Coordinates of interior vertices, ordered by interior DOF."""
        order = np.argsort(self.interior_dof[~self.is_boundary])
        return self.vertices[~self.is_boundary][order]


def build_mesh_1d(domain: Interval1D, n_cells: int) -> Mesh:
    """Uniform partition of the interval into n_cells segments."""
    if n_cells < 2:
        raise InvalidMesh(f"n_cells={n_cells}: need at least 2 cells")
    x = np.linspace(domain.x_lo, domain.x_hi, n_cells + 1)
    vertices = x[:, None].copy()
    elements = np.column_stack(
        [np.arange(n_cells), np.arange(1, n_cells + 1)]
    ).astype(np.int64)
    is_boundary = np.zeros(n_cells + 1, dtype=bool)
    is_boundary[0] = is_boundary[-1] = True
    interior_dof = np.full(n_cells + 1, -1, dtype=np.int64)
    interior_dof[1:-1] = np.arange(n_cells - 1)
    h = (domain.x_hi - domain.x_lo) / n_cells
    return Mesh(domain, vertices, elements, is_boundary, interior_dof, h, n_cells + 1)


def build_mesh_2d(domain: Rect2D, n_cells_per_dir: int) -> Mesh:
    """Uniform n x n grid of cells, each split along the same diagonal.

    The diagonal runs lower-left to upper-right, so every interior vertex has
    exactly six incident triangles.  Interior DOFs are numbered row-major
    (y-major), which keeps the stiffness bandwidth at n_cells_per_dir.
    """
    n = n_cells_per_dir
    if n < 2:
        raise InvalidMesh(f"n_cells_per_dir={n}: need at least 2 cells")
    xs = np.linspace(domain.x_lo, domain.x_hi, n + 1)
    ys = np.linspace(domain.y_lo, domain.y_hi, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")  # row iy, column ix
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(ix, iy):
        return iy * (n + 1) + ix

    elements = np.empty((2 * n * n, 3), dtype=np.int64)
    k = 0
    for iy in range(n):
        for ix in range(n):
            ll, lr = vid(ix, iy), vid(ix + 1, iy)
            ul, ur = vid(ix, iy + 1), vid(ix + 1, iy + 1)
            elements[k] = (ll, lr, ur)
            elements[k + 1] = (ll, ur, ul)
            k += 2

    ix_grid, iy_grid = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    on_edge = (
        (ix_grid == 0) | (ix_grid == n) | (iy_grid == 0) | (iy_grid == n)
    )
    is_boundary = on_edge.ravel()
    interior_dof = np.full((n + 1) ** 2, -1, dtype=np.int64)
    interior_dof[~is_boundary] = np.arange((n - 1) ** 2)

    sx = (domain.x_hi - domain.x_lo) / n
    sy = (domain.y_hi - domain.y_lo) / n
    h = float(np.hypot(sx, sy))
    return Mesh(domain, vertices, elements, is_boundary, interior_dof, h, n + 1)


def meshes_compatible(a: Mesh, b: Mesh) -> bool:
    """True when two meshes are the same structured mesh (possibly rebuilt).

    The structured generators are deterministic, so equal domain and grid
    resolution imply identical vertices, elements and DOF numbering.
    """
    return a is b or (a.domain == b.domain and a.p_per_dir == b.p_per_dir)


def element_diameters(mesh: Mesh) -> np.ndarray:
    """Diameter of every element, recomputed from vertex coordinates."""
    pts = mesh.vertices[mesh.elements]  # (ne, nloc, dim)
    nloc = pts.shape[1]
    diam = np.zeros(len(pts))
    for i in range(nloc):
        for j in range(i + 1, nloc):
            d = np.linalg.norm(pts[:, i] - pts[:, j], axis=-1)
            diam = np.maximum(diam, d)
    return diam
