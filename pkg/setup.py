import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; mplg.kernels falls back to NumPy
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("MPLG_NO_EXTENSION"):
    ext_modules = cythonize(
        [
            Extension(
                "mplg._ckernels",
                ["src/mplg/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
