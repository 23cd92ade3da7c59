import logging
from typing import Any, Dict, Optional, Sequence

import numpy as np

from pairlab.errors import ArgumentError
from pairlab.linalg import as_matrix, cov_sqrt
from pairlab.phantoms import generate_ood_phantoms, generate_phantoms
from pairlab.random import get_stream, kGaussianStream, kNoiseStream
from pairlab.tomography import ForwardOperator

logger = logging.getLogger(__name__)


class GaussianModelSpec:

    def __init__(self, mean: np.ndarray, cov_x: np.ndarray,
                 cov_noise: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov_x = as_matrix(cov_x)
        self.cov_noise = as_matrix(cov_noise)
        n = len(self.mean)
        if self.cov_x.shape != (n, n):
            raise ArgumentError(
                f"parameter covariance of shape {self.cov_x.shape} does not match mean of length {n}"
            )
        q = self.cov_noise.shape[0]
        if self.cov_noise.shape != (q, q):
            raise ArgumentError("noise covariance must be square")

    @property
    def n(self) -> int:
        return len(self.mean)

    @property
    def q(self) -> int:
        return self.cov_noise.shape[0]

    def check_operator(self, A: np.ndarray) -> None:
        if A.shape != (self.q, self.n):
            raise ArgumentError(
                f"operator of shape {A.shape} does not match a ({self.q}, {self.n}) model"
            )


class Normalization:

    def __init__(self, x_mean: float, x_std: float, y_mean: float,
                 y_std: float):
        if not x_std > 0.0 or not y_std > 0.0:
            raise ArgumentError(
                f"normalization scales must be positive, got {x_std} and {y_std}")
        self.x_mean = float(x_mean)
        self.x_std = float(x_std)
        self.y_mean = float(y_mean)
        self.y_std = float(y_std)

    def normalize_x(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.x_mean) / self.x_std

    def denormalize_x(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) * self.x_std + self.x_mean

    def normalize_y(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y) - self.y_mean) / self.y_std

    def denormalize_y(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) * self.y_std + self.y_mean

    def to_dict(self) -> Dict[str, float]:
        return {
            "x_mean": self.x_mean,
            "x_std": self.x_std,
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @staticmethod
    def from_dict(d: Dict[str, Any]) -> "Normalization":
        return Normalization(d["x_mean"], d["x_std"], d["y_mean"], d["y_std"])

    @staticmethod
    def identity() -> "Normalization":
        return Normalization(0.0, 1.0, 0.0, 1.0)


def _safe_std(values: np.ndarray) -> float:
    std = float(np.std(values))
    return std if std > 0.0 else 1.0


def compute_normalization(X: np.ndarray, Y: np.ndarray) -> Normalization:
    return Normalization(float(np.mean(X)), _safe_std(X), float(np.mean(Y)),
                         _safe_std(Y))


class Dataset:

    def __init__(self,
                 X: np.ndarray,
                 Y: np.ndarray,
                 normalization: Optional[Normalization] = None,
                 provenance: Optional[Dict[str, Any]] = None,
                 shapes: Optional[Dict[str, Sequence[int]]] = None):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        if X.shape[0] != Y.shape[0]:
            raise ArgumentError(
                f"sample counts differ: {X.shape[0]} parameters, {Y.shape[0]} observations"
            )
        self.X = X
        self.Y = Y
        self.normalization = normalization or compute_normalization(X, Y)
        self.provenance = dict(provenance or {})
        self.shapes = {
            "x": list((shapes or {}).get("x", [X.shape[1]])),
            "y": list((shapes or {}).get("y", [Y.shape[1]])),
        }

    @property
    def count(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[indices], self.Y[indices], self.normalization,
                       self.provenance, self.shapes)

    def with_normalization(self, normalization: Normalization) -> "Dataset":
        return Dataset(self.X, self.Y, normalization, self.provenance,
                       self.shapes)


# Sampling.


def sample_gaussian_models(spec: GaussianModelSpec, count: int,
                           seed: int) -> np.ndarray:
    if count < 1:
        raise ArgumentError(f"sample count must be positive, got {count}")
    L = cov_sqrt(spec.cov_x)
    X = np.empty((count, spec.n))
    for i in range(count):
        w = get_stream(seed, kGaussianStream, i).standard_normal(spec.n)
        X[i] = spec.mean + L @ w
    return X


def sample_gaussian_noise(cov_noise: np.ndarray, count: int,
                          seed: int) -> np.ndarray:
    L = cov_sqrt(cov_noise)
    q = L.shape[0]
    E = np.empty((count, q))
    for i in range(count):
        E[i] = L @ get_stream(seed, kNoiseStream, i).standard_normal(q)
    return E


def simulate_observations(A: np.ndarray, X: np.ndarray, noise_fraction: float,
                          seed: int) -> np.ndarray:
    if isinstance(A, ForwardOperator):
        A = A.matrix
    if noise_fraction < 0.0:
        raise ArgumentError(
            f"noise fraction must be nonnegative, got {noise_fraction}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = X @ A.T
    if noise_fraction == 0.0:
        return Y

    # Rescale white noise to the exact requested fraction of every clean norm.
    for i in range(Y.shape[0]):
        signal = float(np.linalg.norm(Y[i]))
        if signal == 0.0:
            continue
        e = get_stream(seed, kNoiseStream, i).standard_normal(Y.shape[1])
        e *= noise_fraction * signal / np.linalg.norm(e)
        Y[i] += e
    return Y


def make_gaussian_dataset(spec: GaussianModelSpec, A: np.ndarray, count: int,
                          seed: int) -> Dataset:
    spec.check_operator(A)
    X = sample_gaussian_models(spec, count, seed)
    Y = X @ A.T + sample_gaussian_noise(spec.cov_noise, count, seed)
    provenance = {"seed": seed, "generator": "gaussian"}
    return Dataset(X, Y, provenance=provenance)


def make_tomography_dataset(A: ForwardOperator,
                            count: int,
                            seed: int,
                            noise_fraction: float,
                            ood: bool = False,
                            normalization: Optional[Normalization] = None
                           ) -> Dataset:
    grid_side = A.geometry.grid_side
    if ood:
        X = generate_ood_phantoms(grid_side, count, seed)
    else:
        X = generate_phantoms(grid_side, count, seed)
    Y = simulate_observations(A, X, noise_fraction, seed)
    provenance = {
        "seed": seed,
        "noise_fraction": noise_fraction,
        "generator": "ood-ellipses" if ood else "ellipses",
    }
    shapes = {
        "x": [grid_side, grid_side],
        "y": list(A.geometry.observation_shape),
    }
    logger.info("generated %d %s samples (seed %d)", count,
                provenance["generator"], seed)
    return Dataset(X, Y, normalization, provenance, shapes)
