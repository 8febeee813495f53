"""Build script for the optional Cython fast kernels.

The package works without the compiled extensions (pure-numpy fallbacks are
selected at import time), so a failed cythonize/compile only costs speed.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "tipcast._boxstep_kernel",
                ["src/tipcast/_boxstep_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            ),
            Extension(
                "tipcast._sdtw_kernel",
                ["src/tipcast/_sdtw_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            ),
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
