import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "npstm._kernels",
        ["src/npstm/_kernels.pyx"],
        include_dirs=[np.get_include()],
        # keep IEEE semantics so both backends round identically
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
