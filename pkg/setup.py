import numpy as np
from setuptools import Extension, setup

# The compiled stepping kernel is optional: without Cython (or a C compiler)
# the package installs pure-Python and mgtlab._stepping falls back to numpy.
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "mgtlab._kernels",
                ["src/mgtlab/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
