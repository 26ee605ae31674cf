"""Backend agreement: the compiled kernels and the numpy fallback must
produce the same results. Sampling kernels consume pre-drawn uniforms,
so they are required to match bit for bit; the divergence matrix may
differ by float round-off only."""

import numpy as np
import pytest

from labelpool._kernels import BACKEND, _numpy

try:
    from labelpool._kernels import _core
except ImportError:
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled backend not built")


def test_backend_reports_kind():
    assert BACKEND in ("cython", "numpy")
    if _core is not None:
        assert BACKEND == "cython"


def _random_rows(seed, n, d):
    return np.random.default_rng(seed).dirichlet(np.ones(d), size=n)


@needs_core
@pytest.mark.parametrize("kind", [0, 1, 2, 3])
def test_divergence_matrix_backends_agree(kind):
    for seed in range(5):
        rows = _random_rows(seed, 25, 4)
        a = _core.divergence_matrix(rows, kind)
        b = _numpy.divergence_matrix(rows, kind)
        assert np.allclose(a, b, atol=1e-12, equal_nan=True)


@needs_core
def test_divergence_matrix_kl_inf_pattern_agrees():
    rows = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
    a = _core.divergence_matrix(rows, 0)
    b = _numpy.divergence_matrix(rows, 0)
    assert np.array_equal(np.isinf(a), np.isinf(b))
    finite = np.isfinite(a)
    assert np.allclose(a[finite], b[finite], atol=1e-12)


@needs_core
def test_categorical_counts_bit_identical():
    rng = np.random.default_rng(42)
    for trial in range(10):
        n, d, src_n = 30, 4, 12
        cdf = np.cumsum(rng.dirichlet(np.ones(d), size=src_n), axis=1)
        cdf[:, -1] = 1.0
        src = rng.integers(0, src_n, size=n)
        m = rng.integers(1, 15, size=n)
        u = rng.random(int(m.sum()))
        a = _core.categorical_counts(cdf, src, u, m)
        b = _numpy.categorical_counts(cdf, src, u, m)
        assert np.array_equal(a, b), f"trial {trial}"


@needs_core
def test_lda_sweep_bit_identical():
    rng = np.random.default_rng(7)
    n, d, p, t_count = 12, 4, 3, 90
    doc = np.sort(rng.integers(0, n, size=t_count)).astype(np.int32)
    word = rng.integers(0, d, size=t_count).astype(np.int32)

    def fresh_state():
        z = rng0.integers(0, p, size=t_count).astype(np.int32)
        n_iz = np.zeros((n, p), dtype=np.int64)
        n_zw = np.zeros((p, d), dtype=np.int64)
        n_z = np.zeros(p, dtype=np.int64)
        for t in range(t_count):
            n_iz[doc[t], z[t]] += 1
            n_zw[z[t], word[t]] += 1
            n_z[z[t]] += 1
        return z, n_iz, n_zw, n_z

    rng0 = np.random.default_rng(100)
    state_a = fresh_state()
    rng0 = np.random.default_rng(100)
    state_b = fresh_state()
    for sweep in range(5):
        u = np.random.default_rng(200 + sweep).random(t_count)
        _core.lda_sweep(doc, word, *state_a, 0.5, 0.1, u)
        _numpy.lda_sweep(doc, word, *state_b, 0.5, 0.1, u)
        for arr_a, arr_b in zip(state_a, state_b):
            assert np.array_equal(arr_a, arr_b), f"sweep {sweep}"


def test_numpy_categorical_counts_sums():
    rng = np.random.default_rng(3)
    cdf = np.cumsum(rng.dirichlet(np.ones(3), size=5), axis=1)
    cdf[:, -1] = 1.0
    src = rng.integers(0, 5, size=20)
    m = np.full(20, 7)
    u = rng.random(140)
    counts = _numpy.categorical_counts(cdf, src, u, m)
    assert counts.shape == (20, 3)
    assert np.array_equal(counts.sum(axis=1), m)


def test_numpy_categorical_counts_point_mass():
    cdf = np.array([[1.0, 1.0]])
    src = np.zeros(4, dtype=np.int64)
    m = np.full(4, 3)
    u = np.random.default_rng(0).random(12)
    counts = _numpy.categorical_counts(cdf, src, u, m)
    assert np.array_equal(counts, np.tile([3, 0], (4, 1)))
