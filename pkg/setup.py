import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("REFSEG_SKIP_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "refseg.carafe._kernels",
                    ["src/refseg/carafe/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # No Cython at build time: the package still works on the
        # pure-PyTorch reassembly path selected at import.
        ext_modules = []

setup(ext_modules=ext_modules)
