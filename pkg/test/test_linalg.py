import numpy as np
import pytest
from pytest import approx

from pairlab.errors import ArgumentError
from pairlab.linalg import (cov_sqrt, is_spd, numerical_rank, pinv,
                            spectral_norm, svd, sym_eig, truncate)
from pairlab.random import get_random_matrix, get_random_spd


def test_svd_identity():
    S = svd(np.eye(3))
    assert list(S.singular_values) == [1.0, 1.0, 1.0]


def test_svd_diagonal():
    S = svd(np.diag([3.0, 2.0, 1.0]))
    assert list(S.singular_values) == approx([3.0, 2.0, 1.0])
    assert np.allclose(np.abs(S.U), np.eye(3))
    assert np.allclose(np.abs(S.Vt), np.eye(3))


def test_svd_random_reconstruction():
    M = get_random_matrix(4, 3, seed=1)
    S = svd(M, full=False)
    actual = (S.U * S.singular_values) @ S.Vt
    assert np.linalg.norm(actual - M) < 1e-10 * np.linalg.norm(M)


def test_svd_full_factors_are_orthogonal():
    M = get_random_matrix(5, 3, seed=2)
    S = svd(M)
    assert np.allclose(S.U.T @ S.U, np.eye(5), atol=1e-10)
    assert np.allclose(S.Vt @ S.Vt.T, np.eye(3), atol=1e-10)
    assert np.all(np.diff(S.singular_values) <= 0.0)


def test_svd_sign_convention():
    M = get_random_matrix(4, 4, seed=3)
    S = svd(M)
    for col in S.U.T:
        assert col[np.argmax(np.abs(col))] > 0.0


def test_svd_rejects_non_finite():
    with pytest.raises(ArgumentError):
        svd(np.array([[1.0, np.nan]]))


def test_truncate_diagonal():
    M = np.diag([3.0, 2.0, 1.0])
    T = truncate(svd(M), 2)
    assert T.rank == 2
    assert spectral_norm(M - T.reconstruct()) == approx(1.0)


def test_truncate_full_rank_is_exact():
    M = get_random_matrix(4, 6, seed=4)
    T = truncate(svd(M), 4)
    assert np.allclose(T.reconstruct(), M, atol=1e-10)


@pytest.mark.parametrize("size", [3, 5, 8])
def test_truncation_error_is_next_singular_value(size: int):
    M = get_random_matrix(size, size, seed=size)
    S = svd(M)
    r = size // 2
    residual = spectral_norm(M - truncate(S, r).reconstruct())
    assert residual == approx(S.singular_values[r], abs=1e-10)


def test_truncate_rank_out_of_range():
    S = svd(np.eye(3))
    with pytest.raises(ArgumentError):
        truncate(S, 0)
    with pytest.raises(ArgumentError):
        truncate(S, 4)


def test_pinv_identity():
    assert np.array_equal(pinv(np.eye(3)), np.eye(3))


def test_pinv_rank_deficient_diagonal():
    expected = np.diag([0.5, 0.0])
    actual = pinv(np.diag([2.0, 0.0]))
    assert np.allclose(actual, expected)


def _check_penrose(M: np.ndarray, Mp: np.ndarray) -> None:
    scale = max(1.0, np.linalg.norm(M))
    assert np.linalg.norm(M @ Mp @ M - M) < 1e-8 * scale
    assert np.linalg.norm(Mp @ M @ Mp - Mp) < 1e-8 * max(1.0, np.linalg.norm(Mp))
    assert np.allclose((M @ Mp).T, M @ Mp, atol=1e-8)
    assert np.allclose((Mp @ M).T, Mp @ M, atol=1e-8)


def test_pinv_penrose_full_rank():
    M = get_random_matrix(6, 4, seed=5)
    _check_penrose(M, pinv(M))


def test_pinv_penrose_rank_deficient():
    B = get_random_matrix(6, 2, seed=6)
    C = get_random_matrix(2, 5, seed=7)
    M = B @ C
    _check_penrose(M, pinv(M))


def test_numerical_rank():
    assert numerical_rank([3.0, 2.0, 1e-20]) == 2
    assert numerical_rank([0.0, 0.0]) == 0


def test_sym_eig_identity():
    E = sym_eig(np.eye(3))
    assert list(E.values) == approx([1.0, 1.0, 1.0])


def test_sym_eig_diagonal():
    E = sym_eig(np.diag([4.0, 1.0]))
    assert list(E.values) == approx([4.0, 1.0])
    assert np.allclose(np.abs(E.vectors), np.eye(2))


def test_sym_eig_random_spd_reconstruction():
    G = get_random_spd(5, seed=8)
    E = sym_eig(G)
    actual = (E.vectors * E.values) @ E.vectors.T
    assert np.linalg.norm(actual - G) < 1e-10 * np.linalg.norm(G)
    assert np.all(E.values > 0.0)
    assert np.all(np.diff(E.values) <= 0.0)


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(ArgumentError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_cov_sqrt_identity():
    assert np.allclose(cov_sqrt(np.eye(3)), np.eye(3))


def test_cov_sqrt_diagonal():
    assert np.allclose(cov_sqrt(np.diag([9.0, 4.0])), np.diag([3.0, 2.0]))

    # Columns follow the descending eigenvalue order.
    L = cov_sqrt(np.diag([4.0, 9.0]))
    assert np.allclose(L @ L.T, np.diag([4.0, 9.0]))
    assert np.allclose(np.abs(L), np.array([[0.0, 2.0], [3.0, 0.0]]))


def test_cov_sqrt_random_spd():
    G = get_random_spd(6, seed=9)
    L = cov_sqrt(G)
    assert np.linalg.norm(L @ L.T - G) < 1e-10 * np.linalg.norm(G)


def test_cov_sqrt_singular_vectors_match_eigenvectors():
    G = get_random_spd(4, seed=10)
    S = svd(cov_sqrt(G))
    E = sym_eig(G)
    assert np.allclose(S.U, E.vectors, atol=1e-8)
    assert np.allclose(S.singular_values, np.sqrt(E.values))


def test_cov_sqrt_rejects_non_spd():
    with pytest.raises(ArgumentError, match="smallest eigenvalue"):
        cov_sqrt(np.diag([1.0, -1.0]))
    assert not is_spd(np.diag([1.0, 0.0]))
    assert is_spd(np.eye(2))
