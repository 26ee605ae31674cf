from setuptools import Extension, setup

# The compiled kernels are optional: the package falls back to the numpy
# implementations in labelpool._kernels._numpy when the extension is absent.
try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "labelpool._kernels._core",
                ["src/labelpool/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
