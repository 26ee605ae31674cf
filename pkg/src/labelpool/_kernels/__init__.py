"""Hot numeric kernels with a compiled core and a numpy fallback.

The Cython extension ``labelpool._kernels._core`` is built at install
time; when it is missing (source checkout without a compiler, failed
build) the numpy implementations take over with identical semantics.
``BACKEND`` names whichever implementation is active.

The sampling kernels (``categorical_counts``, ``lda_sweep``) are
bit-identical across backends: they consume pre-drawn uniforms with the
same comparison order, so seeded pipelines do not depend on the backend.
``divergence_matrix`` agrees across backends to floating-point
round-off (summation order differs).
"""

from labelpool._kernels import _numpy

try:
    from labelpool._kernels import _core as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _numpy
    BACKEND = "numpy"

divergence_matrix = _impl.divergence_matrix
categorical_counts = _impl.categorical_counts
lda_sweep = _impl.lda_sweep

__all__ = ["BACKEND", "divergence_matrix", "categorical_counts", "lda_sweep"]
