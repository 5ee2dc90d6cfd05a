"""Build script: compiles the optional C extension for the hot kernels.

The package works without the extension (a pure-Python kernel is selected at
import time), so extension build failures are downgraded to warnings.
Set DPIPE_NO_EXTENSION=1 to skip the compiled kernel entirely.
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that tolerates a missing or broken C toolchain."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"warning: compiled kernel unavailable ({exc}); "
            "falling back to the pure-Python kernel",
            file=sys.stderr,
        )


ext_modules = []
if os.environ.get("DPIPE_NO_EXTENSION") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "dpipe._speedups",
                    ["src/dpipe/_speedups.pyx"],
                    extra_compile_args=["-O2"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
