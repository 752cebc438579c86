"""Build the optional Cython kernel; the package falls back to numpy if it is absent."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("SEMIPC_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "semipc._nwcore",
                    ["src/semipc/_nwcore.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
