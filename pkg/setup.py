"""Build the optional Cython path kernels.

If Cython or a C compiler is unavailable the package still installs and
falls back to the numpy implementation in ``movbound._fallback``.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MOVBOUND_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
        import numpy as np
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "movbound._kernels",
                    ["src/movbound/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
