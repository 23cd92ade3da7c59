import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from pairlab.errors import ArgumentError, NumericalError
from pairlab.lbfgs import LbfgsConfig, Objective, WolfeCheck, lbfgs_minimize
from pairlab.linear import LinearPair
from pairlab.linalg import as_matrix
from pairlab.masks import MaskOperator
from pairlab.pair import PairModel
from pairlab.random import get_stream, kEnsembleStream
from pairlab.tomography import ForwardOperator

logger = logging.getLogger(__name__)

LatentPair = Union[PairModel, LinearPair]

kDefaultPerturbation = 0.1


@dataclass
class LsiConfig:
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    regularization: float = 0.0

    def validate(self) -> None:
        self.lbfgs.validate()
        if self.regularization < 0.0:
            raise ArgumentError(
                f"regularization must be nonnegative, got {self.regularization}")


class LsiResult:

    def __init__(self, z: np.ndarray, z_init: np.ndarray, x_hat: np.ndarray,
                 y_completed: np.ndarray, history: List[float],
                 initial_residual: float, final_residual: float,
                 iterations: int, termination: str, steps: List[WolfeCheck]):
        self.z = z
        self.z_init = z_init
        self.x_hat = x_hat
        self.y_completed = y_completed
        self.history = history
        self.initial_residual = initial_residual
        self.final_residual = final_residual
        self.iterations = iterations
        self.termination = termination
        self.steps = steps


class LsiProblem:
    """A latent objective together with its residual and decoding maps.

    `objective` returns the value and gradient of half the squared masked
    residual. `finish` maps a latent point to the reconstructed parameter and
    the completed observation.
    """

    def __init__(self, objective: Objective, residual: Callable[[np.ndarray],
                                                                  np.ndarray],
                 finish: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]],
                 z_init: np.ndarray, name: str):
        self.objective = objective
        self.residual = residual
        self.finish = finish
        self.z_init = z_init
        self.name = name

    def residual_norm(self, z: np.ndarray) -> float:
        return float(np.linalg.norm(self.residual(z)))


def _check_observation(pair: LatentPair, P: MaskOperator,
                       y_sub: np.ndarray) -> np.ndarray:
    y_sub = np.asarray(y_sub, dtype=np.float64)
    if y_sub.ndim != 1 or len(y_sub) != P.size:
        raise ArgumentError(
            f"observation of shape {y_sub.shape} does not match mask of size {P.size}"
        )
    if P.size != pair.q:
        raise ArgumentError(
            f"mask of size {P.size} does not match observations of length {pair.q}")
    return y_sub


def solve(problem: LsiProblem,
          config: Optional[LsiConfig] = None,
          z0: Optional[np.ndarray] = None) -> LsiResult:
    config = config or LsiConfig()
    config.validate()
    z_init = np.array(problem.z_init if z0 is None else z0, dtype=np.float64)
    rho = config.regularization

    def regularized(z: np.ndarray) -> Tuple[float, np.ndarray]:
        f, g = problem.objective(z)
        if rho > 0.0:
            d = z - z_init
            f += 0.5 * rho * float(d @ d)
            g = g + rho * d
        return f, g

    result = lbfgs_minimize(regularized, z_init, config.lbfgs)
    x_hat, y_completed = problem.finish(result.z)
    initial = problem.residual_norm(z_init)
    final = problem.residual_norm(result.z)
    logger.debug("%s: %s after %d iterations, residual %.4e -> %.4e",
                 problem.name, result.termination, result.iterations, initial,
                 final)
    return LsiResult(result.z, z_init, x_hat, y_completed, result.history,
                     initial, final, result.iterations, result.termination,
                     result.steps)


# Observation space.


def observation_space_problem(pair: LatentPair, P: MaskOperator,
                              y_sub: np.ndarray) -> LsiProblem:
    y_sub = _check_observation(pair, P, y_sub)
    w = P.weights
    target = pair.normalize_y(y_sub)

    def residual(z: np.ndarray) -> np.ndarray:
        return w * (pair.decode_y(z) - target)

    def objective(z: np.ndarray) -> Tuple[float, np.ndarray]:
        r = residual(z)
        return 0.5 * float(r @ r), pair.vjp_decode_y(z, w * r)

    def finish(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x_hat = pair.denormalize_x(pair.decode_x(pair.map_bwd(z)))
        return x_hat, pair.denormalize_y(pair.decode_y(z))

    return LsiProblem(objective, residual, finish, pair.encode_y(target),
                      "lsi-zy")


def lsi_observation_space(pair: LatentPair,
                          P: MaskOperator,
                          y_sub: np.ndarray,
                          config: Optional[LsiConfig] = None,
                          z0: Optional[np.ndarray] = None) -> LsiResult:
    return solve(observation_space_problem(pair, P, y_sub), config, z0)


# Parameter space.


def parameter_space_problem(pair: LatentPair, P: MaskOperator,
                            y_sub: np.ndarray) -> LsiProblem:
    y_sub = _check_observation(pair, P, y_sub)
    w = P.weights
    target = pair.normalize_y(y_sub)

    def residual(z: np.ndarray) -> np.ndarray:
        return w * (pair.decode_y(pair.map_fwd(z)) - target)

    def objective(z: np.ndarray) -> Tuple[float, np.ndarray]:
        zy = pair.map_fwd(z)
        r = w * (pair.decode_y(zy) - target)
        g = pair.vjp_map_fwd(z, pair.vjp_decode_y(zy, w * r))
        return 0.5 * float(r @ r), g

    def finish(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x_hat = pair.denormalize_x(pair.decode_x(z))
        return x_hat, pair.denormalize_y(pair.decode_y(pair.map_fwd(z)))

    return LsiProblem(objective, residual, finish,
                      pair.map_bwd(pair.encode_y(target)), "lsi-zx")


def lsi_parameter_space(pair: LatentPair,
                        P: MaskOperator,
                        y_sub: np.ndarray,
                        config: Optional[LsiConfig] = None,
                        z0: Optional[np.ndarray] = None) -> LsiResult:
    return solve(parameter_space_problem(pair, P, y_sub), config, z0)


# Model space, through the physical operator.


def get_ensemble_starts(z_base: np.ndarray, ensemble: int, seed: int,
                        perturbation: float) -> List[np.ndarray]:
    starts = []
    for k in range(ensemble):
        noise = get_stream(seed, kEnsembleStream, k).standard_normal(len(z_base))
        starts.append(z_base + perturbation * noise)
    return starts


def model_space_problem(pair: LatentPair,
                        A: Union[ForwardOperator, np.ndarray],
                        P: MaskOperator,
                        y_sub: np.ndarray,
                        x_prior: Optional[np.ndarray] = None) -> LsiProblem:
    A = A.matrix if isinstance(A, ForwardOperator) else as_matrix(A)
    y_sub = _check_observation(pair, P, y_sub)
    if A.shape != (pair.q, pair.n):
        raise ArgumentError(
            f"operator of shape {A.shape} does not match the pair ({pair.q}, {pair.n})"
        )
    w = P.weights
    y_scale = 1.0 / pair.y_std
    x_scale = pair.x_std

    # The prior mean encodes to the common start of every member.
    if x_prior is None:
        x_prior = pair.denormalize_x(np.zeros(pair.n))
    z_base = pair.encode_x(pair.normalize_x(x_prior))

    def residual(z: np.ndarray) -> np.ndarray:
        x = pair.denormalize_x(pair.decode_x(z))
        return w * (A @ x - y_sub) * y_scale

    def objective(z: np.ndarray) -> Tuple[float, np.ndarray]:
        r = residual(z)
        g = pair.vjp_decode_x(z, x_scale * y_scale * (A.T @ (w * r)))
        return 0.5 * float(r @ r), g

    def finish(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x_hat = pair.denormalize_x(pair.decode_x(z))
        return x_hat, A @ x_hat

    return LsiProblem(objective, residual, finish, z_base, "mlsi")


def model_space_lsi(pair: LatentPair,
                    A: Union[ForwardOperator, np.ndarray],
                    P: MaskOperator,
                    y_sub: np.ndarray,
                    config: Optional[LsiConfig] = None,
                    ensemble: int = 1,
                    seed: int = 0,
                    x_prior: Optional[np.ndarray] = None,
                    perturbation: float = kDefaultPerturbation
                   ) -> List[LsiResult]:
    if ensemble < 1:
        raise ArgumentError(f"ensemble size must be positive, got {ensemble}")
    problem = model_space_problem(pair, A, P, y_sub, x_prior)
    starts = get_ensemble_starts(problem.z_init, ensemble, seed, perturbation)
    return [solve(problem, config, z0) for z0 in starts]


def ensemble_mean(results: List[LsiResult]) -> np.ndarray:
    return np.mean([r.x_hat for r in results], axis=0)


def tikhonov_baseline(A: Union[ForwardOperator, np.ndarray], y: np.ndarray,
                      lam: float) -> np.ndarray:
    if not lam > 0.0:
        raise ArgumentError(f"regularization must be positive, got {lam}")
    A = A.matrix if isinstance(A, ForwardOperator) else as_matrix(A)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != A.shape[0]:
        raise ArgumentError(
            f"observation of shape {y.shape} does not match operator {A.shape}")
    normal = A.T @ A
    normal[np.diag_indices_from(normal)] += lam
    try:
        factor = scipy.linalg.cho_factor(normal)
        return scipy.linalg.cho_solve(factor, A.T @ y.T).T
    except scipy.linalg.LinAlgError as e:
        raise NumericalError(f"regularized normal equations failed: {e}") from e
