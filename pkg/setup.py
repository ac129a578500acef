import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("BOTUQ_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        # No Cython/numpy at build time: install without the compiled core,
        # the package falls back to the pure numpy kernels at import.
        pass
    else:
        ext = Extension(
            "botuq.kernels._fast",
            ["src/botuq/kernels/_fast.pyx"],
            include_dirs=[numpy.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize(
            [ext],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
