from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off keeps the C arithmetic bit-identical to the pure-Python
# fallback (no FMA contraction), which the backend parity tests rely on.
extensions = [
    Extension(
        "stormerlab._core",
        ["src/stormerlab/_core.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
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
        },
    )
)
