import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the numpy fallback kernels are used instead
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "pcaglue._ckernels",
                ["src/pcaglue/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # No FMA contraction: DP costs must match the enumeration oracle bit for bit.
                extra_compile_args=["-O3", "-ffp-contract=off"],
                # A failed compile leaves a working pure-Python install.
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
