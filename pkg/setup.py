import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/vmmatch/signal/_blockmatch.pyx"],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    sys.stderr.write(f"cython unavailable, building without compiled kernels: {exc}\n")

setup(ext_modules=ext_modules)
