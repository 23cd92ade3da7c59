from typing import Optional

import numpy as np
import scipy.linalg

from pairlab.errors import ArgumentError, NumericalError

Matrix = np.ndarray
Vector = np.ndarray

kSymmetryTol = 1e-12
kSpdTol = 1e-12


class SvdResult:

    def __init__(self, U: Matrix, singular_values: Vector, Vt: Matrix):
        self.U = U
        self.singular_values = singular_values
        self.Vt = Vt


class TruncatedSvd:

    def __init__(self, U_r: Matrix, s_r: Vector, Vt_r: Matrix):
        self.U_r = U_r
        self.s_r = s_r
        self.Vt_r = Vt_r

    @property
    def rank(self) -> int:
        return len(self.s_r)

    def reconstruct(self) -> Matrix:
        return (self.U_r * self.s_r) @ self.Vt_r


class SymEig:

    def __init__(self, vectors: Matrix, values: Vector):
        self.vectors = vectors
        self.values = values


def as_matrix(M: Matrix) -> Matrix:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ArgumentError(f"expected a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ArgumentError("matrix has non-finite entries")
    return M


# Sign and order conventions.


def _sign_flips(vectors: Matrix) -> Vector:

    # The entry of largest magnitude in every column becomes positive.
    if vectors.shape[0] == 0:
        return np.ones(vectors.shape[1])
    idx = np.argmax(np.abs(vectors), axis=0)
    leading = vectors[idx, np.arange(vectors.shape[1])]
    return np.where(leading < 0.0, -1.0, 1.0)


def _descending_order(values: Vector) -> np.ndarray:
    return np.argsort(-values, kind="stable")


# Singular value decomposition.


def svd(M: Matrix, full: bool = True) -> SvdResult:
    M = as_matrix(M)
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=full)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"svd did not converge: {e}") from e

    # Enforce the order and the sign convention on the paired vectors.
    k = len(s)
    order = _descending_order(s)
    s = s[order]
    U = U.copy()
    Vt = Vt.copy()
    U[:, :k] = U[:, order]
    Vt[:k, :] = Vt[order, :]
    flips = _sign_flips(U[:, :k])
    U[:, :k] *= flips
    Vt[:k, :] *= flips[:, None]

    # Unpaired vectors of the full factorization are flipped on their own.
    if U.shape[1] > k:
        U[:, k:] *= _sign_flips(U[:, k:])
    if Vt.shape[0] > k:
        Vt[k:, :] *= _sign_flips(Vt[k:, :].T)[:, None]
    return SvdResult(U, s, Vt)


def truncate(S: SvdResult, r: int) -> TruncatedSvd:
    k = len(S.singular_values)
    if not 1 <= r <= k:
        raise ArgumentError(f"truncation rank {r} out of range [1, {k}]")
    return TruncatedSvd(S.U[:, :r].copy(), S.singular_values[:r].copy(),
                        S.Vt[:r, :].copy())


def default_rcond(M: Matrix) -> float:
    return max(M.shape) * np.finfo(np.float64).eps


def pinv(M: Matrix, rcond: Optional[float] = None) -> Matrix:
    M = as_matrix(M)
    if rcond is None:
        rcond = default_rcond(M)
    if rcond < 0.0:
        raise ArgumentError(f"rcond must be nonnegative, got {rcond}")
    if M.size == 0:
        return np.zeros((M.shape[1], M.shape[0]))
    S = svd(M, full=False)
    s = S.singular_values
    k = len(s)
    keep = s > rcond * s[0] if k > 0 else np.zeros(0, dtype=bool)
    inv_s = np.zeros(k)
    inv_s[keep] = 1.0 / s[keep]
    return (S.Vt.T * inv_s) @ S.U.T


def numerical_rank(values: Vector, rcond: Optional[float] = None) -> int:
    values = np.abs(np.asarray(values, dtype=np.float64))
    if len(values) == 0 or values.max() == 0.0:
        return 0
    if rcond is None:
        rcond = len(values) * np.finfo(np.float64).eps
    return int(np.count_nonzero(values > rcond * values.max()))


def spectral_norm(M: Matrix) -> float:
    M = as_matrix(M)
    if M.size == 0:
        return 0.0
    return float(svd(M, full=False).singular_values[0])


# Symmetric eigendecomposition and covariance square roots.


def symmetrize(G: Matrix) -> Matrix:
    G = as_matrix(G)
    if G.shape[0] != G.shape[1]:
        raise ArgumentError(f"expected a square matrix, got shape {G.shape}")
    scale = max(1.0, float(np.max(np.abs(G)))) if G.size else 1.0
    asymmetry = float(np.max(np.abs(G - G.T))) if G.size else 0.0
    if asymmetry > kSymmetryTol * scale:
        raise ArgumentError(
            f"matrix is not symmetric (max asymmetry {asymmetry:.3e})")
    return 0.5 * (G + G.T)


def sym_eig(G: Matrix) -> SymEig:
    G = symmetrize(G)
    try:
        values, vectors = scipy.linalg.eigh(G)
    except scipy.linalg.LinAlgError as e:
        raise NumericalError(f"eigendecomposition did not converge: {e}") from e
    order = _descending_order(values)
    values = values[order]
    vectors = vectors[:, order]
    vectors = vectors * _sign_flips(vectors)
    return SymEig(vectors, values)


def cov_sqrt_eig(G: Matrix) -> SymEig:
    eig = sym_eig(G)
    values = eig.values
    if len(values) == 0:
        return eig
    smallest = float(values[-1])
    if smallest <= kSpdTol * float(values[0]):
        raise ArgumentError(
            f"matrix is not SPD (smallest eigenvalue {smallest:.3e})")
    return eig


def cov_sqrt(G: Matrix) -> Matrix:
    eig = cov_sqrt_eig(G)
    return eig.vectors * np.sqrt(eig.values)


def is_spd(G: Matrix) -> bool:
    try:
        cov_sqrt_eig(G)
    except ArgumentError:
        return False
    return True
