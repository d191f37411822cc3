"""Build script: compiles the optional packing kernel extension.

The compiled kernel accelerates circle-packing layout; the package falls
back to the pure-Python implementation when the extension is missing, so a
failed Cython build only costs speed, never functionality.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/datamator/datamation/_packing.pyx"],
        language_level=3,
    )
    # -ffp-contract=off keeps the C kernel bit-identical to the pure-Python
    # fallback (no fused multiply-add contraction).
    for ext in ext_modules:
        ext.extra_compile_args = ["-O2", "-ffp-contract=off"]
except ImportError:
    pass

setup(ext_modules=ext_modules)
