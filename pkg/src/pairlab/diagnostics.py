import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.ndimage import uniform_filter

from pairlab.errors import ArgumentError
from pairlab.linalg import spectral_norm
from pairlab.linear import LinearPair, closed_form_lsi_zy
from pairlab.lsi import LatentPair, LsiConfig, lsi_observation_space
from pairlab.masks import MaskOperator, apply_mask
from pairlab.random import get_stream, kPairStream
from pairlab.tomography import ForwardOperator

logger = logging.getLogger(__name__)

kSsimWindow = 7
kSsimK1 = 0.01
kSsimK2 = 0.03
kDefaultPairCount = 64
kDefaultRadius = 0.01
kBoundSlack = 1e-9

# Quality metrics.


def rre(x_pred: np.ndarray, x: np.ndarray) -> float:
    x_pred = np.asarray(x_pred, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_pred.shape != x.shape:
        raise ArgumentError(f"shapes {x_pred.shape} and {x.shape} differ")
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise ArgumentError("relative error of a zero ground truth")
    return float(np.linalg.norm(x_pred - x) / norm)


def ssim(a: np.ndarray,
         b: np.ndarray,
         dynamic_range: Optional[float] = None) -> float:
    """Mean structural similarity over 7x7 windows.

    `b` is the reference image. Without an explicit dynamic range its value
    range is used, or 1 if it is constant.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ArgumentError(f"ssim needs two images of equal shape, got {a.shape} and {b.shape}")
    if dynamic_range is None:
        dynamic_range = float(b.max() - b.min()) or 1.0
    if not dynamic_range > 0.0:
        raise ArgumentError(f"dynamic range must be positive, got {dynamic_range}")
    c1 = (kSsimK1 * dynamic_range)**2
    c2 = (kSsimK2 * dynamic_range)**2

    def mean(v: np.ndarray) -> np.ndarray:
        return uniform_filter(v, size=kSsimWindow, mode="reflect")

    mu_a, mu_b = mean(a), mean(b)
    var_a = mean(a * a) - mu_a * mu_a
    var_b = mean(b * b) - mu_b * mu_b
    cov_ab = mean(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov_ab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class MetricsRecord:
    sample_id: int = -1
    method: str = ""
    mask_kind: str = ""
    missing_fraction: float = 0.0
    rre: float = math.nan
    ssim: float = math.nan
    residual_estimate: float = math.nan
    autoencode_diff: float = math.nan
    bound_predicted: float = math.nan
    bound_actual: float = math.nan
    bound_ok: str = ""

    def to_row(self) -> Dict[str, Union[int, float, str]]:
        return asdict(self)


kMetricsColumns = tuple(f.name for f in fields(MetricsRecord))


def surrogate_forward(pair: LatentPair, x: np.ndarray) -> np.ndarray:
    return pair.denormalize_y(
        pair.decode_y(pair.map_fwd(pair.encode_x(pair.normalize_x(x)))))


def ood_metrics(pair: LatentPair, x_pred: np.ndarray, z_y: np.ndarray,
                y: np.ndarray) -> MetricsRecord:
    y = np.asarray(y, dtype=np.float64)
    norm = np.linalg.norm(y)
    if norm == 0.0:
        raise ArgumentError("out-of-distribution metrics of a zero observation")
    residual = surrogate_forward(pair, x_pred) - y
    autoencoded = pair.denormalize_y(pair.decode_y(z_y)) - y
    return MetricsRecord(
        residual_estimate=float(np.linalg.norm(residual) / norm),
        autoencode_diff=float(np.linalg.norm(autoencoded) / norm))


# Certificates.


class BoundConstants:
    """Constants of the stability bound, all in normalized coordinates.

    Sampled Lipschitz constants are lower bounds on the true ones, so a bound
    built from them is an estimate rather than a guarantee.
    """

    def __init__(self,
                 eps_x: float,
                 eps_y: float,
                 gamma_m: float,
                 delta: float,
                 L_dx: float,
                 L_mbwd: float,
                 L_ey: float,
                 L_A: float,
                 alpha_P: float,
                 beta_P: float,
                 descriptor: str = "",
                 sampled: bool = True):
        self.eps_x = eps_x
        self.eps_y = eps_y
        self.gamma_m = gamma_m
        self.delta = delta
        self.L_dx = L_dx
        self.L_mbwd = L_mbwd
        self.L_ey = L_ey
        self.L_A = L_A
        self.alpha_P = alpha_P
        self.beta_P = beta_P
        self.descriptor = descriptor
        self.sampled = sampled

    @property
    def vacuous(self) -> bool:
        return self.alpha_P <= 0.0

    def error_bound(self) -> float:
        if self.vacuous:
            return math.inf
        inner = self.beta_P / self.alpha_P * self.eps_y + self.delta
        return self.L_dx * (self.L_mbwd * self.L_ey * inner +
                            self.gamma_m) + self.eps_x

    def residual_bound(self, noise_norm: float) -> float:
        if self.vacuous:
            return math.inf
        return self.beta_P * (self.L_A * self.error_bound() + noise_norm)

    def to_dict(self) -> dict:
        return dict(vars(self))


def _restricted_ratio(P: MaskOperator, u: np.ndarray,
                      v: np.ndarray) -> Optional[float]:
    d = u - v
    norm = np.linalg.norm(d)
    if norm == 0.0:
        return None
    return float(np.linalg.norm(P.weights * d) / norm)


def _get_pairs(points: np.ndarray, pair_count: int, radius: float,
               rng: np.random.Generator):
    # Random sample pairs plus local perturbation pairs of length `radius`.
    count, dim = points.shape
    i, j = rng.integers(0, count, size=(2, pair_count))
    k = rng.integers(0, count, size=pair_count)
    xi = rng.standard_normal((pair_count, dim))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    U = np.vstack([points[i], points[k]])
    V = np.vstack([points[j], points[k] + radius * xi])
    return U, V


def _max_ratio(f: Callable[[np.ndarray], np.ndarray], U: np.ndarray,
               V: np.ndarray) -> float:
    du = np.linalg.norm(U - V, axis=1)
    keep = du > 0.0
    if not np.any(keep):
        return 0.0
    dv = np.linalg.norm(f(U[keep]) - f(V[keep]), axis=1)
    return float(np.max(dv / du[keep]))


def _normalized_operator(pair: LatentPair, A: np.ndarray
                        ) -> Callable[[np.ndarray], np.ndarray]:

    def op(x: np.ndarray) -> np.ndarray:
        return pair.normalize_y(pair.denormalize_x(x) @ A.T)

    return op


def _as_operator(A: Union[ForwardOperator, np.ndarray]) -> np.ndarray:
    return A.matrix if isinstance(A, ForwardOperator) else np.asarray(
        A, dtype=np.float64)


def _max_row_norm(D: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(D, axis=-1)))


def estimate_constants(pair: LatentPair,
                       A: Union[ForwardOperator, np.ndarray],
                       X: np.ndarray,
                       Y: np.ndarray,
                       P: MaskOperator,
                       pair_count: int = kDefaultPairCount,
                       seed: int = 0,
                       radius: float = kDefaultRadius) -> BoundConstants:
    A = _as_operator(A)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if len(X) == 0 or len(X) != len(Y):
        raise ArgumentError("sample set must be nonempty with matching counts")
    if pair_count < 1:
        raise ArgumentError(f"pair count must be positive, got {pair_count}")

    # Consistency errors.
    Xn, Yn = pair.normalize_x(X), pair.normalize_y(Y)
    Zx, Zy = pair.encode_x(Xn), pair.encode_y(Yn)
    Yae = pair.decode_y(Zy)
    eps_x = _max_row_norm(pair.decode_x(Zx) - Xn)
    eps_y = _max_row_norm(Yae - Yn)
    gamma_m = _max_row_norm(pair.map_bwd(pair.map_fwd(Zx)) - Zx)
    delta = _max_row_norm(Yn - pair.decode_y(pair.map_fwd(Zx)))

    # Lipschitz estimates, each on its own stream.
    def sampled(k: int, points: np.ndarray, f) -> float:
        rng = get_stream(seed, kPairStream, k)
        return _max_ratio(f, *_get_pairs(points, pair_count, radius, rng))

    L_dx = sampled(0, Zx, pair.decode_x)
    L_mbwd = sampled(1, Zy, pair.map_bwd)
    L_ey = sampled(2, Yn, pair.encode_y)
    L_A = sampled(3, Xn, _normalized_operator(pair, A))

    # Mask distortion on the samples and their autoencoded versions.
    U, V = _get_pairs(np.vstack([Yn, Yae]), pair_count, radius,
                      get_stream(seed, kPairStream, 4))
    ratios = [_restricted_ratio(P, u, v) for u, v in zip(U, V)]
    ratios = [r for r in ratios if r is not None]
    alpha_P = min(ratios) if ratios else 0.0
    beta_P = max(ratios) if ratios else 0.0

    constants = BoundConstants(eps_x, eps_y, gamma_m, delta, L_dx, L_mbwd,
                               L_ey, L_A, alpha_P, beta_P,
                               f"{len(X)} samples, {pair_count} pairs, {P}")
    logger.info("bound constants: eps_x %.3e, eps_y %.3e, alpha %.3e, beta %.3e",
                eps_x, eps_y, alpha_P, beta_P)
    return constants


def spectral_constants(pair: LinearPair,
                       A: Union[ForwardOperator, np.ndarray],
                       P: MaskOperator,
                       X: np.ndarray,
                       Y: np.ndarray,
                       pair_count: int = kDefaultPairCount,
                       seed: int = 0) -> BoundConstants:
    A = _as_operator(A)
    constants = estimate_constants(pair, A, X, Y, P, pair_count, seed)
    constants.L_dx = spectral_norm(pair.D_x)
    constants.L_mbwd = spectral_norm(pair.M_bwd)
    constants.L_ey = spectral_norm(pair.E_y)
    constants.L_A = spectral_norm(A) * pair.x_std / pair.y_std
    constants.sampled = False
    return constants


class BoundSample:

    def __init__(self, sample_id: int, actual_error: float,
                 predicted_error: float, actual_residual: float,
                 predicted_residual: float, first_step_ok: bool,
                 vacuous: bool):
        self.sample_id = sample_id
        self.actual_error = actual_error
        self.predicted_error = predicted_error
        self.actual_residual = actual_residual
        self.predicted_residual = predicted_residual
        self.first_step_ok = first_step_ok
        self.vacuous = vacuous

    @property
    def error_ok(self) -> bool:
        return _within(self.actual_error, self.predicted_error)

    @property
    def residual_ok(self) -> bool:
        return _within(self.actual_residual, self.predicted_residual)


def _within(actual: float, predicted: float) -> bool:
    return actual <= predicted * (1.0 + kBoundSlack) + 1e-12


class BoundReport:

    def __init__(self, constants: BoundConstants, samples: List[BoundSample]):
        self.constants = constants
        self.samples = samples

    def _rate(self, flags: Sequence[bool]) -> float:
        return float(np.mean(flags)) if flags else math.nan

    @property
    def error_rate(self) -> float:
        return self._rate([s.error_ok for s in self.samples])

    @property
    def residual_rate(self) -> float:
        return self._rate([s.residual_ok for s in self.samples])

    @property
    def first_step_rate(self) -> float:
        return self._rate([s.first_step_ok for s in self.samples])


def _ratio_or(P: MaskOperator, u: np.ndarray, v: np.ndarray,
              fallback: float, pick: Callable[[float, float], float]) -> float:
    r = _restricted_ratio(P, u, v)
    return fallback if r is None else pick(fallback, r)


def bound_report(constants: BoundConstants,
                 pair: LatentPair,
                 A: Union[ForwardOperator, np.ndarray],
                 P: MaskOperator,
                 X: np.ndarray,
                 Y: np.ndarray,
                 lsi_config: Optional[LsiConfig] = None,
                 noise_fraction: Optional[float] = None,
                 sample_ids: Optional[Sequence[int]] = None) -> BoundReport:
    """Evaluates the stability bound on test samples.

    Each sample's bound combines the calibration constants with its own
    consistency errors and mask ratios, so the linear bound holds exactly when
    the Lipschitz constants are spectral. The noise norm is the true one
    unless a declared noise fraction is given.
    """
    A = _as_operator(A)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    lsi_config = lsi_config or LsiConfig()
    sample_ids = range(len(X)) if sample_ids is None else sample_ids
    op = _normalized_operator(pair, A)
    samples = []
    for sid, x, y in zip(sample_ids, X, Y):
        y_sub = apply_mask(P, y)
        xn, yn = pair.normalize_x(x), pair.normalize_y(y)

        # Reconstruction. Closed form where one exists.
        result = lsi_observation_space(pair, P, y_sub, lsi_config)
        if isinstance(pair, LinearPair):
            z, x_hat = closed_form_lsi_zy(pair, P, y_sub)
        else:
            z, x_hat = result.z, result.x_hat
        x_hat_n = pair.normalize_x(x_hat)
        y_hat = pair.decode_y(z)
        y_ae = pair.decode_y(pair.encode_y(yn))
        ax_hat = op(x_hat_n)

        # Per-sample constants.
        zx = pair.encode_x(xn)
        local = BoundConstants(**constants.to_dict())
        local.eps_x = max(local.eps_x,
                          float(np.linalg.norm(pair.decode_x(zx) - xn)))
        local.eps_y = max(local.eps_y, float(np.linalg.norm(y_ae - yn)))
        local.gamma_m = max(
            local.gamma_m,
            float(np.linalg.norm(pair.map_bwd(pair.map_fwd(zx)) - zx)))
        local.delta = max(
            local.delta,
            float(np.linalg.norm(yn - pair.decode_y(pair.map_fwd(zx)))))
        local.alpha_P = _ratio_or(P, y_hat, yn, local.alpha_P, min)
        local.beta_P = _ratio_or(P, y_ae, yn, local.beta_P, max)
        local.beta_P = _ratio_or(P, ax_hat, yn, local.beta_P, max)

        if noise_fraction is None:
            noise = float(np.linalg.norm(y - A @ x)) / pair.y_std
        else:
            noise = noise_fraction * float(np.linalg.norm(A @ x)) / pair.y_std
        samples.append(
            BoundSample(
                int(sid), float(np.linalg.norm(x_hat_n - xn)),
                local.error_bound(),
                float(np.linalg.norm(P.weights * (ax_hat - yn))),
                local.residual_bound(noise),
                result.final_residual <= result.initial_residual,
                local.vacuous))

    report = BoundReport(constants, samples)
    logger.info("bound satisfied on %.1f%% of %d samples (%s constants)",
                100.0 * report.error_rate, len(samples),
                "sampled" if constants.sampled else "spectral")
    return report
