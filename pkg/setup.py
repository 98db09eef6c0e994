"""Build the optional Cython kernels; the package falls back to numpy if they are absent."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MAXCLOAK_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        extensions = [
            Extension(
                "maxcloak._ckernels",
                ["src/maxcloak/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
            )
        ]
        ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
