"""Build script for the optional compiled similarity kernels.

The package is fully functional without the extension; ilrkit.kernels
falls back to a numpy implementation when the compiled module is absent.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/ilrkit/kernels/_native.pyx",
        compiler_directives={"language_level": "3"},
    )
    include_dirs = [numpy.get_include()]
except ImportError:  # pure-python install still works
    ext_modules = []
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
