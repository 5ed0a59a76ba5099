"""Build script for the optional Cython kernels.

The package works without them; ``engcap._backend`` falls back to numpy.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("ENGCAP_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "engcap._kernels",
                    ["src/engcap/_kernels.pyx"],
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
    except ImportError:
        print("Cython/numpy not available; installing pure-Python fallback only")

setup(ext_modules=ext_modules)
