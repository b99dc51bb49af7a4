from setuptools import setup, Extension

try:
    from Cython.Build import cythonize
    import numpy as np

    extensions = cythonize(
        [
            Extension(
                "multimodes._kernels._core",
                ["src/multimodes/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython available: install pure-Python; the package falls back to the
    # NumPy/SciPy kernel backend at import time.
    extensions = []

setup(ext_modules=extensions)
