"""Build script: compiles the optional simulation stepper extension.

The package is pure Python except for delayhinf._stepper, a Cython
translation of the inner DDE integration loop.  If Cython or a C
compiler is unavailable the build falls back to a pure-Python package;
delayhinf.sim selects the fallback stepper at import time.
"""

import os
import sys

from setuptools import setup

PYX = "src/delayhinf/_stepper.pyx"

ext_modules = []
if os.path.exists(PYX):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "delayhinf._stepper",
                    [PYX],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError as exc:
        sys.stderr.write(f"delayhinf: building without compiled stepper ({exc})\n")

setup(ext_modules=ext_modules)
