"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension: flowdance.nn.backend
falls back to vectorized numpy kernels when the compiled module is missing
(or when FLOWDANCE_FORCE_NUMPY=1). Run `python setup.py build_ext --inplace`
to compile, and `python benchmarks/bench_kernels.py` to compare both paths.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "flowdance.nn._kernels",
                ["src/flowdance/nn/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    # No Cython available: install pure-python package, numpy backend only.
    ext_modules = []

setup(ext_modules=ext_modules)
