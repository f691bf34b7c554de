import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# -ffp-contract=off keeps the scalar triangle-intersection math free of FMA
# contraction so the brute-force and BVH paths produce bit-identical hits.
ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "probeguide._kernels._fastcore",
                ["src/probeguide/_kernels/_fastcore.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
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
