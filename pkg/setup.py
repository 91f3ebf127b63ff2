from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "idasnet._kernels._ckern",
                ["src/idasnet/_kernels/_ckern.pyx"],
                extra_compile_args=["-O3", "-ffast-math"],
                libraries=["mvec", "m"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-python install still works; the fallback kernels are selected
    # at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
