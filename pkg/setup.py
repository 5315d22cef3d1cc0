"""Build script for the optional Cython kernels.

The package works without a compiler: when the extension cannot be built,
``qdetect.kernels`` falls back to the numpy implementation at import time.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("QDETECT_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "qdetect._ckernels",
                    ["src/qdetect/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
