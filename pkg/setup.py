"""Builds the optional compiled KNN kernel.

The package works without it: siesef.neighborhood falls back to a pure-numpy
kernel when the extension is missing (e.g. no C compiler at install time).
"""
import sys

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "siesef._neighbors_c",
                sources=["src/siesef/_neighbors_c.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
except ImportError:
    print("cython not available; installing with pure-python KNN kernel", file=sys.stderr)

setup(ext_modules=ext_modules)
