import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "dilconv._kernels",
        ["src/dilconv/_kernels.pyx"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        include_dirs=[np.get_include(), "src/dilconv"],
        depends=["src/dilconv/gemm_kernel.h"],
        extra_compile_args=["-O3", "-march=native", "-ffp-contract=off"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
