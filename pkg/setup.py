"""Builds the optional compiled alignment kernel.

The package works without it: vpkl.align falls back to the pure-numpy
kernel when the extension is missing or fails to build.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "vpkl.align._dp",
                ["src/vpkl/align/_dp.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
