"""Build hook for the optional compiled solver core.

The package works without the extension (numpy fallback); the build therefore
marks the extension optional so a missing compiler or FFTW never fails the
install.
"""

import os

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    fftw_ok = os.path.exists("/usr/include/fftw3.h") or os.environ.get("POLYWIND_FFTW_DIR")
    if fftw_ok:
        ext = Extension(
            "polywind._corekern",
            sources=["src/polywind/_corekern.pyx"],
            include_dirs=[numpy.get_include()],
            libraries=["fftw3", "m"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
            optional=True,
        )
        ext_modules = cythonize([ext], language_level=3)
except ImportError:
    pass

setup(ext_modules=ext_modules)
