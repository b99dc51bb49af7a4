"""Pure-Python kernel backend (NumPy + LAPACK via SciPy).

Call-compatible with the compiled `_core` extension; used when the extension
is not built or when MULTIMODES_KERNELS=python forces it.
"""

import numpy as np
import scipy.linalg

__all__ = ["band_cholesky", "band_solve", "csr_matvec", "scatter_add"]


def band_cholesky(ab):
    """Cholesky factor of an SPD band matrix, ab[j, k] = A[j+k, j].

    Raises numpy.linalg.LinAlgError on a non-positive pivot (LAPACK pbtrf).
    """
    ab = np.ascontiguousarray(ab, dtype=np.float64)
    # scipy's lower band layout is the transpose: ab_l[k, j] = A[j+k, j].
    fac = scipy.linalg.cholesky_banded(ab.T, lower=True, check_finite=False)
    return np.ascontiguousarray(fac.T)


def band_solve(fac, b):
    """Solve A x = b given the band Cholesky factor (forward + backward pass)."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (fac.shape[0],):
        raise ValueError(f"rhs length {b.shape} != factor dimension {fac.shape[0]}")
    return scipy.linalg.cho_solve_banded((fac.T, True), b, check_finite=False)


def csr_matvec(indptr, indices, data, x):
    """y = A x for a CSR matrix whose rows are all non-empty."""
    prod = data * x[indices]
    return np.add.reduceat(prod, indptr[:-1])


def scatter_add(out, idx, vals):
    """out[idx[i]] += vals[i] with duplicate indices accumulated."""
    if len(idx) != len(vals):
        raise ValueError("index/value length mismatch")
    np.add.at(out, idx, vals)
