import math

import numpy as np
import pytest

from labelpool.divergence import KINDS, distance, kl, pairwise_matrix


def test_kl_hand_value():
    # 0.5*ln(0.5/0.25) + 0.5*ln(0.5/0.75)
    expected = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)
    assert kl([0.5, 0.5], [0.25, 0.75]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.14384, abs=1e-5)


def test_kl_point_mass():
    assert kl([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2.0), abs=1e-12)


def test_kl_self_is_zero():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = rng.dirichlet(np.ones(4))
        assert kl(p, p) == 0.0


def test_kl_nonnegative_and_positive_when_different():
    rng = np.random.default_rng(7)
    for _ in range(300):
        d = rng.integers(2, 6)
        p = rng.dirichlet(np.ones(d))
        q = rng.dirichlet(np.ones(d))
        v = kl(p, q)
        assert v >= 0.0
        if np.max(np.abs(p - q)) > 1e-9:
            assert v > 0.0


def test_kl_asymmetric():
    p, q = [0.5, 0.5], [0.25, 0.75]
    assert kl(p, q) != kl(q, p)


def test_kl_undefined_on_zero_support():
    with pytest.raises(ValueError, match="zero mass"):
        kl([0.5, 0.5], [1.0, 0.0])


def test_euclidean_hand_value():
    assert distance([0.2, 0.8], [0.4, 0.6], "euclidean") == pytest.approx(
        math.sqrt(0.08), abs=1e-12
    )


def test_chebyshev_hand_value():
    assert distance([0.2, 0.8], [0.4, 0.6], "chebyshev") == pytest.approx(0.2, abs=1e-12)


def test_canberra_hand_value():
    # |0.2-0.4|/0.6 + |0.8-0.6|/1.4
    assert distance([0.2, 0.8], [0.4, 0.6], "canberra") == pytest.approx(10.0 / 21.0, abs=1e-12)


def test_canberra_zero_over_zero_term():
    assert distance([0.0, 1.0], [0.0, 1.0], "canberra") == 0.0
    assert distance([0.5, 0.5, 0.0], [0.5, 0.0, 0.5], "canberra") == pytest.approx(2.0, abs=1e-12)


def test_distance_kl_matches_kl():
    p, q = [0.3, 0.7], [0.6, 0.4]
    assert distance(p, q, "kl") == kl(p, q)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="kind"):
        distance([0.5, 0.5], [0.5, 0.5], "cosine")


def test_pairwise_matrix_matches_pair_calls():
    rng = np.random.default_rng(11)
    rows = rng.dirichlet(np.ones(4), size=15)
    for kind in KINDS:
        mat = pairwise_matrix(rows, kind)
        assert mat.shape == (15, 15)
        for i in range(15):
            for j in range(15):
                assert mat[i, j] == pytest.approx(
                    distance(rows[i], rows[j], kind), abs=1e-12
                ), (kind, i, j)


def test_pairwise_matrix_zero_diagonal():
    rng = np.random.default_rng(13)
    rows = rng.dirichlet(np.ones(3), size=10)
    for kind in KINDS:
        assert np.all(np.diag(pairwise_matrix(rows, kind)) == 0.0)


def test_pairwise_matrix_identical_rows_exact_zero():
    rows = np.array([[0.2, 0.8], [0.5, 0.5], [0.2, 0.8]])
    for kind in KINDS:
        mat = pairwise_matrix(rows, kind)
        assert mat[0, 2] == 0.0 and mat[2, 0] == 0.0


def test_pairwise_matrix_kl_inf_on_unsupported():
    rows = np.array([[1.0, 0.0], [0.5, 0.5]])
    mat = pairwise_matrix(rows, "kl")
    # row 0 has mass where row 1 does too, but row 1 needs support at
    # label 1 which row 0 lacks
    assert math.isinf(mat[1, 0])
    assert math.isfinite(mat[0, 1])


def test_symmetric_kinds():
    rng = np.random.default_rng(17)
    rows = rng.dirichlet(np.ones(5), size=12)
    for kind in ("euclidean", "chebyshev", "canberra"):
        mat = pairwise_matrix(rows, kind)
        assert np.allclose(mat, mat.T, atol=1e-12)
