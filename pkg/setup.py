import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# optional=True: a failed compile leaves the pure-Python kernels in charge
extensions = [
    Extension(
        "fatigue_seq._ckernels",
        ["src/fatigue_seq/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-march=native"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
)
