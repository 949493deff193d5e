"""Build script for the optional compiled convolution core.

The package works without the extension (a pure-NumPy backend is selected
at import time); building it just makes the conv gather/scatter loops fast.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "deblurlab.kernels._fastconv",
                ["src/deblurlab/kernels/_fastconv.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
