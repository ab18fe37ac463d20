import os

import numpy as np
from setuptools import Extension, setup

# BROOMSCAN_NO_EXT=1 installs the pure-Python package only.
ext_modules = []
if os.getenv("BROOMSCAN_NO_EXT") != "1":
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "broomscan._kernels",
                ["src/broomscan/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffast-math", "-fopenmp-simd"],
                extra_link_args=["-lmvec", "-lm"],
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
