import logging
import warnings
from collections import deque
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.optimize import line_search

from pairlab.errors import ArgumentError

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]

kConverged = "gradient-tolerance"
kMaxIterations = "iteration-budget"
kLineSearchFailure = "line-search-failure"


@dataclass
class LbfgsConfig:
    memory: int = 10
    max_iterations: int = 100
    c1: float = 1e-4
    c2: float = 0.9
    gradient_tolerance: float = 1e-8
    max_line_search: int = 25

    def validate(self) -> None:
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ArgumentError(
                f"Wolfe constants must satisfy 0 < c1 < c2 < 1, got {self.c1}, {self.c2}"
            )
        if self.memory < 1:
            raise ArgumentError(f"memory must be positive, got {self.memory}")
        if self.max_iterations < 0 or self.max_line_search < 1:
            raise ArgumentError("iteration budgets must be nonnegative")


class WolfeCheck:

    def __init__(self, alpha: float, sufficient_decrease: bool,
                 curvature: bool):
        self.alpha = alpha
        self.sufficient_decrease = sufficient_decrease
        self.curvature = curvature

    @property
    def ok(self) -> bool:
        return self.sufficient_decrease and self.curvature


class LbfgsResult:

    def __init__(self, z: np.ndarray, value: float, gradient: np.ndarray,
                 history: List[float], iterations: int, termination: str,
                 steps: List[WolfeCheck]):
        self.z = z
        self.value = value
        self.gradient = gradient
        self.history = history
        self.iterations = iterations
        self.termination = termination
        self.steps = steps


class _CachedObjective:
    """Evaluates value and gradient together, once per point."""

    def __init__(self, objective: Objective):
        self._objective = objective
        self._key: Optional[bytes] = None
        self._value = 0.0
        self._gradient = np.zeros(0)
        self.evaluations = 0

    def __call__(self, z: np.ndarray) -> Tuple[float, np.ndarray]:
        key = np.asarray(z, dtype=np.float64).tobytes()
        if key != self._key:
            value, gradient = self._objective(np.array(z, dtype=np.float64))
            self._key = key
            self._value = float(value)
            self._gradient = np.asarray(gradient, dtype=np.float64)
            self.evaluations += 1
        return self._value, self._gradient

    def value(self, z: np.ndarray) -> float:
        return self(z)[0]

    def gradient(self, z: np.ndarray) -> np.ndarray:
        return self(z)[1]


class LbfgsHessianApproximation:

    def __init__(self, m: int):
        self._iterates = deque(maxlen=m)

    def __len__(self) -> int:
        return len(self._iterates)

    def append(self, s: np.ndarray, y: np.ndarray, s_inner_y: float) -> None:
        if s_inner_y <= 0.0:
            raise ArgumentError(f"invalid curvature pair (s.y = {s_inner_y})")
        self._iterates.append((1.0 / s_inner_y, s.copy(), y.copy()))

    def clear(self) -> None:
        self._iterates.clear()

    def inverse_action(self, x: np.ndarray) -> np.ndarray:
        x = x.copy()
        alphas = []
        for rho, s, y in reversed(self._iterates):
            alpha = rho * float(s @ x)
            x -= alpha * y
            alphas.append(alpha)
        alphas.reverse()

        # Scaled identity as the initial inverse Hessian.
        if self._iterates:
            _, s, y = self._iterates[-1]
            x *= float(s @ y) / float(y @ y)

        for (rho, s, y), alpha in zip(self._iterates, alphas):
            beta = rho * float(y @ x)
            x += (alpha - beta) * s
        return x


def _strong_wolfe(f0: float, g0p: float, f1: float, g1p: float, alpha: float,
                  c1: float, c2: float) -> WolfeCheck:
    return WolfeCheck(alpha, f1 <= f0 + c1 * alpha * g0p,
                      abs(g1p) <= c2 * abs(g0p))


def _line_search(fun: _CachedObjective, z: np.ndarray, p: np.ndarray,
                 f: float, g: np.ndarray, config: LbfgsConfig) -> Optional[float]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        alpha, _, _, _, _, new_slope = line_search(fun.value,
                                                   fun.gradient,
                                                   z,
                                                   p,
                                                   gfk=g,
                                                   old_fval=f,
                                                   c1=config.c1,
                                                   c2=config.c2,
                                                   maxiter=config.max_line_search)
    if alpha is None or new_slope is None or not np.isfinite(alpha):
        return None
    return float(alpha)


def _get_secant_step(alpha: float, g0p: float, g1p: float) -> Optional[float]:
    """Minimizer of the quadratic through both slopes along the search line.

    The result is the exact line minimizer when the objective is quadratic.
    """
    if g1p == 0.0 or not g1p > g0p:
        return None
    step = alpha * g0p / (g0p - g1p)
    if not np.isfinite(step) or step <= 0.0 or abs(step - alpha) <= 1e-12 * alpha:
        return None
    return float(step)


def lbfgs_minimize(objective: Objective,
                   z0: np.ndarray,
                   config: Optional[LbfgsConfig] = None) -> LbfgsResult:
    config = config or LbfgsConfig()
    config.validate()
    fun = _CachedObjective(objective)
    z = np.array(z0, dtype=np.float64)
    f, g = fun(z)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ArgumentError("objective is not finite at the initial point")
    g = g.copy()

    H = LbfgsHessianApproximation(config.memory)
    history = [f]
    steps: List[WolfeCheck] = []
    best_z, best_f, best_g = z.copy(), f, g.copy()
    termination = kMaxIterations
    iterations = 0

    while True:
        if np.linalg.norm(g) <= config.gradient_tolerance:
            termination = kConverged
            break
        if iterations >= config.max_iterations:
            termination = kMaxIterations
            break

        # Search direction, steepest descent whenever the memory misleads.
        p = -H.inverse_action(g)
        g0p = float(g @ p)
        if not g0p < 0.0:
            H.clear()
            p = -g
            g0p = float(g @ p)

        alpha = _line_search(fun, z, p, f, g, config)
        if alpha is None:
            termination = kLineSearchFailure
            break
        z_new = z + alpha * p
        f_new, g_new = fun(z_new)
        g_new = g_new.copy()
        check = _strong_wolfe(f, g0p, f_new, float(g_new @ p), alpha,
                              config.c1, config.c2)
        if not check.ok or not np.isfinite(f_new):
            termination = kLineSearchFailure
            break

        # Take the secant step instead when it is a better Wolfe point.
        secant = _get_secant_step(alpha, g0p, float(g_new @ p))
        if secant is not None:
            z_try = z + secant * p
            f_try, g_try = fun(z_try)
            check_try = _strong_wolfe(f, g0p, f_try, float(g_try @ p),
                                      secant, config.c1, config.c2)
            if check_try.ok and np.isfinite(f_try) and f_try < f_new:
                z_new, f_new, g_new = z_try, f_try, g_try.copy()
                check = check_try
        steps.append(check)
        iterations += 1

        s = z_new - z
        y = g_new - g
        s_inner_y = float(s @ y)
        if s_inner_y > 0.0:
            H.append(s, y, s_inner_y)
        z, f, g = z_new, f_new, g_new
        history.append(f)
        if f < best_f:
            best_z, best_f, best_g = z.copy(), f, g.copy()

    logger.debug("L-BFGS: %s after %d iterations, value %.6e", termination,
                 iterations, best_f)
    return LbfgsResult(best_z, best_f, best_g, history, iterations, termination,
                       steps)
