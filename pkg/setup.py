"""Build the optional Cython kernels.

The extension is optional: if Cython or a C compiler is unavailable the
package installs without it and ``greenfl.kernels`` falls back to numpy.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("GREENFL_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "greenfl._ckernels",
                    ["src/greenfl/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except Exception as exc:  # pragma: no cover - build environment dependent
        print(f"greenfl: building without compiled kernels ({exc})")

setup(ext_modules=ext_modules)
