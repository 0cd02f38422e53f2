from setuptools import Extension, setup
from Cython.Build import cythonize
import numpy as np

# -ffp-contract=off keeps the compiled rotations on the same IEEE operation
# sequence as the numpy fallback (no FMA), so both backends agree closely.
ext = Extension(
    "seegraph._eig",
    ["src/seegraph/_eig.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level="3"))
