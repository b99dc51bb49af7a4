"""Kernel backend selection.

The compiled Cython extension is preferred; the NumPy/SciPy fallback is used
when the extension is absent.  Set MULTIMODES_KERNELS=python or
MULTIMODES_KERNELS=compiled to force a backend (the latter raises if the
extension is not built).
"""

import os

_requested = os.environ.get("MULTIMODES_KERNELS", "auto").strip().lower()
if _requested not in ("auto", "", "compiled", "python"):
    raise ImportError(
        f"MULTIMODES_KERNELS={_requested!r}: expected 'compiled' or 'python'"
    )

if _requested == "python":
    from . import _fallback as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import _fallback as _impl

        BACKEND = "python"

band_cholesky = _impl.band_cholesky
band_solve = _impl.band_solve
csr_matvec = _impl.csr_matvec
scatter_add = _impl.scatter_add

__all__ = ["BACKEND", "band_cholesky", "band_solve", "csr_matvec", "scatter_add"]
