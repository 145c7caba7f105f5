"""Build script for the optional compiled kernel core.

The package is fully functional without the extension (a pure-numpy
fallback is selected at import time).  To build the fast kernels in place:

    python setup.py build_ext --inplace
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    # -ffp-contract=off keeps float expression trees identical to the
    # pure-numpy fallback (no FMA fusion), so both backends agree bitwise.
    extensions = cythonize(
        [
            Extension(
                "raptor._kernels",
                ["src/raptor/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception:
    extensions = []

setup(ext_modules=extensions)
