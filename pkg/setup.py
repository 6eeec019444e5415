"""Build the optional compiled retrieval kernels.

If Cython or a C compiler is unavailable the package still installs and the
numpy fallback is used at import time.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("TEAPROTO_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    name="teaproto.retrieval._kernels",
                    sources=["src/teaproto/retrieval/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
