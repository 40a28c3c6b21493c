"""Build script for the optional compiled time-stepping kernel.

The package works without the extension (a numpy fallback is selected at
import time); a failed compile therefore only emits a warning.
"""

import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # compiler missing, cython missing, ...
            print(f"WARNING: building {ext.name} failed ({exc}); "
                  "falling back to the pure-python kernel")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    return cythonize(
        [Extension(
            "cwlaser._kernels._step_cy",
            ["src/cwlaser/_kernels/_step_cy.pyx"],
            extra_compile_args=["-O3"],
            include_dirs=[numpy.get_include()],
        )],
        language_level=3,
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
