"""Build the optional compiled kernels.

The extension is marked optional: if Cython or a C compiler is missing the
package installs anyway and ``nbaomp.kernels`` falls back to numpy.
"""
from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "nbaomp._kernels",
                ["src/nbaomp/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
