import logging
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from pairlab.data import Dataset
from pairlab.errors import ArgumentError, NumericalError
from pairlab.linalg import as_matrix, cov_sqrt_eig, numerical_rank, pinv
from pairlab.masks import MaskOperator, apply_mask, is_masked, mask_rows

logger = logging.getLogger(__name__)

kDefaultMaxLatent = 64
kInverseSpectrumFloor = 1e-14
kMomentLoading = 1e-8


class LinearPair:

    def __init__(self,
                 E_x: np.ndarray,
                 E_y: np.ndarray,
                 M_fwd: np.ndarray,
                 M_bwd: np.ndarray,
                 sigma_x: np.ndarray,
                 sigma_y: np.ndarray,
                 x_mean: Optional[np.ndarray] = None,
                 y_mean: Optional[np.ndarray] = None):
        self.E_x = E_x
        self.D_x = E_x.T
        self.E_y = E_y
        self.D_y = E_y.T
        self.M_fwd = M_fwd
        self.M_bwd = M_bwd
        self.sigma_x = sigma_x
        self.sigma_y = sigma_y
        self.x_mean = np.zeros(self.n) if x_mean is None else np.asarray(
            x_mean, dtype=np.float64)
        self.y_mean = np.zeros(self.q) if y_mean is None else np.asarray(
            y_mean, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.E_x.shape[1]

    @property
    def q(self) -> int:
        return self.E_y.shape[1]

    @property
    def latent_x(self) -> int:
        return self.E_x.shape[0]

    @property
    def latent_y(self) -> int:
        return self.E_y.shape[0]

    # Coordinates. Linear pairs act on centered vectors.

    def normalize_x(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) - self.x_mean

    def denormalize_x(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) + self.x_mean

    def normalize_y(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) - self.y_mean

    def denormalize_y(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) + self.y_mean

    @property
    def x_std(self) -> float:
        return 1.0

    @property
    def y_std(self) -> float:
        return 1.0

    # Encoders, decoders, and latent maps.

    def encode_x(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.E_x.T

    def decode_x(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) @ self.D_x.T

    def encode_y(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) @ self.E_y.T

    def decode_y(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) @ self.D_y.T

    def map_fwd(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) @ self.M_fwd.T

    def map_bwd(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) @ self.M_bwd.T

    def vjp_decode_x(self, z: np.ndarray, g: np.ndarray) -> np.ndarray:
        return np.asarray(g) @ self.D_x

    def vjp_decode_y(self, z: np.ndarray, g: np.ndarray) -> np.ndarray:
        return np.asarray(g) @ self.D_y

    def vjp_map_fwd(self, z: np.ndarray, g: np.ndarray) -> np.ndarray:
        return np.asarray(g) @ self.M_fwd

    def reconstruction_map(self) -> np.ndarray:
        return self.D_x @ self.M_bwd @ self.E_y


def _check_latent(latent: int, rank: int, dim: int, name: str) -> None:
    if not 1 <= latent <= dim:
        raise ArgumentError(
            f"latent dimension {latent} for {name} out of range [1, {dim}]")
    if latent > rank:
        raise ArgumentError(
            f"latent dimension {latent} for {name} exceeds the numerical rank {rank} of its covariance"
        )


def observation_covariance(A: np.ndarray, cov_x: np.ndarray,
                           cov_noise: np.ndarray) -> np.ndarray:
    cov_y = A @ cov_x @ A.T + cov_noise
    return 0.5 * (cov_y + cov_y.T)


def optimal_linear_pair(A: np.ndarray, cov_x: np.ndarray,
                        cov_noise: np.ndarray, latent_x: int,
                        latent_y: int) -> LinearPair:
    A = as_matrix(A)
    q, n = A.shape
    cov_x = as_matrix(cov_x)
    cov_noise = as_matrix(cov_noise)
    if cov_x.shape != (n, n) or cov_noise.shape != (q, q):
        raise ArgumentError(
            f"covariances {cov_x.shape} and {cov_noise.shape} do not match an operator of shape {A.shape}"
        )

    # Spectral factors of both second moments.
    eig_x = cov_sqrt_eig(cov_x)
    cov_sqrt_eig(cov_noise)
    eig_y = cov_sqrt_eig(observation_covariance(A, cov_x, cov_noise))
    _check_latent(latent_x, numerical_rank(eig_x.values), n, "parameters")
    _check_latent(latent_y, numerical_rank(eig_y.values), q, "observations")
    U_x = eig_x.vectors[:, :latent_x]
    U_y = eig_y.vectors[:, :latent_y]
    sigma2_x = eig_x.values[:latent_x]
    sigma2_y = eig_y.values[:latent_y]

    # Latent maps.
    M_fwd = U_y.T @ A @ U_x
    inv_sigma2_y = 1.0 / np.maximum(sigma2_y,
                                    kInverseSpectrumFloor * sigma2_y[0])
    M_bwd = (sigma2_x[:, None] * (U_x.T @ A.T @ U_y)) * inv_sigma2_y[None, :]

    return LinearPair(U_x.T.copy(), U_y.T.copy(), M_fwd, M_bwd,
                      np.sqrt(sigma2_x), np.sqrt(sigma2_y))


def estimate_second_moment(samples: np.ndarray) -> np.ndarray:
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    count, n = samples.shape
    centered = samples - samples.mean(axis=0)
    G = centered.T @ centered / count
    G += kMomentLoading * np.trace(G) / n * np.eye(n)
    return 0.5 * (G + G.T)


def linear_pair_from_dataset(A: np.ndarray,
                             dataset: Dataset,
                             latent_x: Optional[int] = None,
                             latent_y: Optional[int] = None) -> LinearPair:
    A = as_matrix(A)
    q, n = A.shape
    latent_x = min(n, kDefaultMaxLatent) if latent_x is None else latent_x
    latent_y = min(q, kDefaultMaxLatent) if latent_y is None else latent_y
    cov_x = estimate_second_moment(dataset.X)

    # Isotropic noise estimate from the residuals of the known operator.
    residuals = dataset.Y - dataset.X @ A.T
    noise_var = float(np.mean(residuals**2))
    noise_var = max(noise_var, kMomentLoading * float(np.mean(dataset.Y**2)),
                    1e-300)
    pair = optimal_linear_pair(A, cov_x, noise_var * np.eye(q), latent_x,
                               latent_y)
    pair.x_mean = dataset.X.mean(axis=0)
    pair.y_mean = pair.x_mean @ A.T
    logger.info("estimated linear pair with latent dims (%d, %d), noise var %.3e",
                latent_x, latent_y, noise_var)
    return pair


# Inversion.


def _check_observation(pair: LinearPair, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 0 or y.shape[-1] != pair.q:
        raise ArgumentError(
            f"observation of shape {y.shape} does not match length {pair.q}")
    return y


def pair_inverse_linear(pair: LinearPair, y: np.ndarray) -> np.ndarray:
    y = _check_observation(pair, y)
    return pair.denormalize_x(
        pair.decode_x(pair.map_bwd(pair.encode_y(pair.normalize_y(y)))))


def _masked_target(pair: LinearPair, P: MaskOperator,
                   y_sub: np.ndarray) -> np.ndarray:
    y_sub = _check_observation(pair, y_sub)
    if not is_masked(P, y_sub):
        raise ArgumentError("observation has nonzero entries in the mask's zero set")
    return apply_mask(P, pair.normalize_y(y_sub))


def closed_form_lsi_zy(pair: LinearPair, P: MaskOperator,
                       y_sub: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    target = _masked_target(pair, P, y_sub)
    B = mask_rows(P, pair.D_y)
    z = target @ pinv(B).T
    x_hat = pair.denormalize_x(pair.decode_x(pair.map_bwd(z)))
    return z, x_hat


def closed_form_lsi_zx(pair: LinearPair, P: MaskOperator,
                       y_sub: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    target = _masked_target(pair, P, y_sub)
    B = mask_rows(P, pair.D_y @ pair.M_fwd)
    z = target @ pinv(B).T
    x_hat = pair.denormalize_x(pair.decode_x(z))
    return z, x_hat


def mmse_oracle(A: np.ndarray, cov_x: np.ndarray, cov_noise: np.ndarray,
                y: np.ndarray) -> np.ndarray:
    A = as_matrix(A)
    cov_y = observation_covariance(A, as_matrix(cov_x), as_matrix(cov_noise))
    y = np.asarray(y, dtype=np.float64)
    try:
        w = scipy.linalg.solve(cov_y, y.T, assume_a="pos")
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"observation covariance is singular: {e}") from e
    return (cov_x @ A.T @ w).T
