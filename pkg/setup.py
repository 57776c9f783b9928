"""Build the optional compiled kernels.

If Cython or a C compiler is missing the package still installs; the
pure-Python kernels in ``entanglekit._pykernels`` are used instead.
"""
import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("ENTANGLEKIT_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "entanglekit._kernels",
                    ["src/entanglekit/_kernels.pyx"],
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
    except ImportError as exc:
        print(f"entanglekit: building without compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
