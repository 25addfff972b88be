"""Build script for the optional compiled kernel core.

If Cython or a C compiler is unavailable the package still installs and
falls back to the numpy kernels in ``a2k._pykernels`` at import time.
"""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("A2K_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "a2k._kernels",
                    ["src/a2k/_kernels.pyx"],
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
