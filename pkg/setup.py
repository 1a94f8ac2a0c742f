import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# FMA contraction and the sin+cos -> sincos rewrite both change the last bit,
# which would break agreement with the Python path.
flags = ["-O3", "-ffp-contract=off", "-fno-builtin-sin", "-fno-builtin-cos"]

ext = Extension(
    "parensode._native",
    ["src/parensode/_native.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=flags,
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

if os.environ.get("PARENSODE_NO_EXT"):
    setup()
else:
    setup(ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}))
