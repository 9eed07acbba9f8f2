"""Build support for the optional compiled kernel core.

The z-buffer splatter and the pull-push pyramid are the hot inner loops of
every counterfactual query.  They ship as a Cython extension with a pure
NumPy fallback (`aw4re._kernels_py`) selected at import time, so the package
stays installable on machines without a C toolchain.
"""

import numpy
import setuptools

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - source install without Cython
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = setuptools.Extension(
        "aw4re._kernels_cy",
        ["src/aw4re/_kernels_cy.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)

setuptools.setup(ext_modules=ext_modules)
