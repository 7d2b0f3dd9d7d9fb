"""Build script: compiles the optional native kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); set CONVEXT_SKIP_NATIVE=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the native kernels if possible, otherwise warn and continue."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: native kernel build skipped ({exc}); "
                  "using the pure-numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); "
                  "using the pure-numpy fallback")


def extensions():
    if os.environ.get("CONVEXT_SKIP_NATIVE"):
        return []
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "convext._kernels._native",
        ["src/convext/_kernels/_native.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
