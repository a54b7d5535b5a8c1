import os

from setuptools import setup

ext_modules = []
if os.environ.get("PVBDFL_PURE_PYTHON", "0") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "pvbdfl._ipm_cy",
                    ["src/pvbdfl/_ipm_cy.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # No Cython/numpy at build time: ship pure python, the solver
        # falls back to the numpy kernel at import.
        ext_modules = []

setup(ext_modules=ext_modules)
