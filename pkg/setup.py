"""Build script: compiles the optional string-similarity speedup extension.

The package is fully functional without the extension (a pure-Python
fallback is selected at import time), so a missing compiler or Cython
must never fail the install.
"""

from setuptools import Extension, setup

extensions = []
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "opportune._kernels._speedups",
                ["src/opportune/_kernels/_speedups.pyx"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=extensions)
