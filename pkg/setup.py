"""Build hook for the optional Cython kinematics kernel.

Installation still succeeds without a compiler: the package then runs on the
pure-Python kernel in ``manipulant._kernels._chain_py``.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MANIPULANT_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "manipulant._kernels._chain_cy",
                    ["src/manipulant/_kernels/_chain_cy.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
