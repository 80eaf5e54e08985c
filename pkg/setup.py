"""Build script. Compiles the hot-kernel extension when Cython is available.

The package is fully functional without the extension: ``clids.kernels``
falls back to its NumPy implementations at import time. Set
CLIDS_PURE_PYTHON=1 to skip the compile step on purpose.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CLIDS_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "clids.kernels._ckern",
                    ["src/clids/kernels/_ckern.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
