"""Build script for the compiled tape-execution core.

The package is fully functional without the extension (a pure-Python
interpreter is selected at import time), so compilation failures are
downgraded to a warning instead of aborting the install.
"""

import sys

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "hystereq._core._tapecore",
                ["src/hystereq/_core/_tapecore.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # noqa: BLE001
    sys.stderr.write(f"warning: building without compiled core ({exc})\n")

setup(ext_modules=ext_modules)
