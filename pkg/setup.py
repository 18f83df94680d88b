"""Build script. The compiled kernel module is optional: if Cython or a C
compiler is unavailable the package installs anyway and falls back to the
numpy kernels at import time.

To build the extension in a source checkout:

    python setup.py build_ext --inplace
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "edgefault.backend._fastops",
                ["src/edgefault/backend/_fastops.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
