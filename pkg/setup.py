"""Build script for the optional compiled evaluation kernel.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so a failed build of ``dso._kernel`` only costs
speed.  No -ffast-math: the kernel must match the fallback bit for bit.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "dso._kernel",
                ["src/dso/_kernel.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
