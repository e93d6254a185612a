"""Builds the optional Cython walk kernels.

The package works without them (pure-Python fallback); set
WALKLAB_NO_EXT=1 to skip the build.  No -ffast-math or FMA contraction:
the compiled and Python kernels must agree bit for bit.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("WALKLAB_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "walklab._ckernels",
                    ["src/walklab/_ckernels.pyx"],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
