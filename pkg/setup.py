import numpy
from setuptools import Extension, setup

from Cython.Build import cythonize

extensions = [
    Extension(
        "scenestream.kernels._fast",
        ["src/scenestream/kernels/_fast.pyx"],
        include_dirs=[numpy.get_include()],
        # fp-contract=off: no FMA fusion. no-builtin-sin/cos: stops gcc from
        # merging sin(x)+cos(x) pairs into glibc sincos(), which rounds the
        # sine differently by 1 ulp for some arguments. Both are required to
        # keep results bit-identical to the pure-numpy reference backend.
        extra_compile_args=[
            "-O3",
            "-ffp-contract=off",
            "-fno-builtin-sin",
            "-fno-builtin-cos",
        ],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
