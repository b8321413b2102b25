"""Build the optional Cython kernels.

The package works without them: ``oos_error.kernels`` falls back to the
numpy implementation when ``oos_error._kernels`` cannot be imported.
Set ``OOS_NO_EXT=1`` to skip the extension entirely.
"""
import os
import sys

from setuptools import setup

ext_modules = []
if not os.environ.get("OOS_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        print("Cython/numpy not available; building pure-Python package", file=sys.stderr)
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "oos_error._kernels",
                    ["src/oos_error/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
