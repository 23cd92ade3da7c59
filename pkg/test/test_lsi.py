import numpy as np
import pytest
from pytest import approx

from pairlab.data import Normalization
from pairlab.errors import ArgumentError
from pairlab.lbfgs import LbfgsConfig, kConverged
from pairlab.linear import (closed_form_lsi_zx, closed_form_lsi_zy,
                            optimal_linear_pair)
from pairlab.lsi import (LsiConfig, ensemble_mean, get_ensemble_starts,
                         lsi_observation_space, lsi_parameter_space,
                         model_space_lsi, model_space_problem,
                         observation_space_problem, parameter_space_problem,
                         tikhonov_baseline)
from pairlab.masks import apply_mask, identity_mask, kRandomEntries, make_mask
from pairlab.pair import default_pair_spec, init_model
from pairlab.random import (get_random_matrix, get_random_spd,
                            get_random_vector)


def _tight(max_iterations: int = 50, tolerance: float = 1e-10) -> LsiConfig:
    return LsiConfig(
        LbfgsConfig(max_iterations=max_iterations,
                    gradient_tolerance=tolerance))


def _linear_pair(q: int = 8, n: int = 5, latent_x: int = 3, latent_y: int = 4,
                 seed: int = 0):
    A = get_random_matrix(q, n, seed=seed)
    pair = optimal_linear_pair(A, get_random_spd(n, seed=seed + 1),
                               get_random_spd(q, seed=seed + 2, shift=0.5),
                               latent_x, latent_y)
    return A, pair


def _small_model(seed: int = 0):
    spec = default_pair_spec(6, 9, latent_x=3, latent_y=4, hidden_x=(5,),
                             hidden_y=(7,))
    return init_model(spec, seed,
                      normalization=Normalization(0.3, 1.7, -0.2, 2.5))


def _check_gradient(problem, z):
    _, actual = problem.objective(z)
    step = 1e-5
    for k in range(len(z)):
        e = np.zeros(len(z))
        e[k] = step
        expected = (problem.objective(z + e)[0] -
                    problem.objective(z - e)[0]) / (2 * step)
        assert actual[k] == approx(expected, rel=1e-5, abs=1e-6)


def _masked_observation(pair, P, seed):
    z = get_random_vector(pair.latent_y, seed=seed)
    y = pair.decode_y(z) + 1e-3 * get_random_vector(pair.q, seed=seed + 1)
    return apply_mask(P, y)


@pytest.mark.parametrize("seed", range(20))
def test_observation_space_matches_closed_form(seed: int):
    _, pair = _linear_pair(seed=seed)
    P = make_mask(kRandomEntries, (8,), 0.25, seed=seed)
    y_sub = _masked_observation(pair, P, seed)
    result = lsi_observation_space(pair, P, y_sub, _tight())
    z, x_hat = closed_form_lsi_zy(pair, P, y_sub)
    assert np.linalg.norm(result.x_hat - x_hat) <= 1e-6 * np.linalg.norm(x_hat)
    assert np.allclose(result.z, z, atol=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_parameter_space_matches_closed_form(seed: int):
    _, pair = _linear_pair(seed=seed)
    P = make_mask(kRandomEntries, (8,), 0.25, seed=seed)
    y_sub = _masked_observation(pair, P, seed)
    result = lsi_parameter_space(pair, P, y_sub, _tight(50))
    _, x_hat = closed_form_lsi_zx(pair, P, y_sub)
    assert np.linalg.norm(result.x_hat - x_hat) <= 1e-6 * np.linalg.norm(x_hat)


def test_observation_space_without_mask_is_exact_in_range():
    _, pair = _linear_pair()
    y = pair.decode_y(get_random_vector(4, seed=5))
    result = lsi_observation_space(pair, identity_mask((8,)), y, _tight())
    assert result.final_residual < 1e-8
    assert np.allclose(result.y_completed, y)


def test_observation_space_nonlinear_in_range():
    model = _small_model(seed=1)
    z_true = get_random_vector(4, seed=6)
    y = model.denormalize_y(model.decode_y(z_true))
    z0 = z_true + 0.01 * get_random_vector(4, seed=7)
    result = lsi_observation_space(model, identity_mask((9,)), y,
                                   _tight(200, 1e-12), z0=z0)
    assert result.final_residual < 1e-8


def test_zero_observation_is_stationary():
    _, pair = _linear_pair()
    P = make_mask(kRandomEntries, (8,), 0.5, seed=1)
    result = lsi_observation_space(pair, P, np.zeros(8), z0=np.zeros(4))
    assert result.termination == kConverged
    assert result.iterations == 0
    assert not np.any(result.z)
    assert not np.any(result.x_hat)


def test_parameter_space_consistent_observation():
    _, pair = _linear_pair(seed=4)
    y = pair.decode_y(pair.map_fwd(get_random_vector(3, seed=8)))
    result = lsi_parameter_space(pair, identity_mask((8,)), y,
                                 _tight(100, 1e-12))
    assert result.final_residual < 1e-8
    assert result.history[-1] <= result.history[0]


@pytest.mark.parametrize("seed", range(5))
def test_residual_never_increases(seed: int):
    model = _small_model(seed)
    P = make_mask(kRandomEntries, (9,), 0.4, seed=seed)
    y_sub = apply_mask(P, 3.0 * get_random_vector(9, seed=seed + 10))
    config = LsiConfig(LbfgsConfig(max_iterations=10))
    for result in (lsi_observation_space(model, P, y_sub, config),
                   lsi_parameter_space(model, P, y_sub, config)):
        assert result.final_residual <= result.initial_residual
        assert all(b <= a for a, b in zip(result.history, result.history[1:]))
        assert all(step.ok for step in result.steps)


def test_observation_space_start_is_encoded_observation():
    model = _small_model(seed=2)
    P = make_mask(kRandomEntries, (9,), 0.3, seed=2)
    y_sub = apply_mask(P, get_random_vector(9, seed=3))
    result = lsi_observation_space(model, P, y_sub,
                                   LsiConfig(LbfgsConfig(max_iterations=0)))
    expected = model.encode_y(model.normalize_y(y_sub))
    assert np.array_equal(result.z_init, expected)
    assert np.array_equal(result.z, expected)


@pytest.mark.parametrize("seed", [0, 1])
def test_objective_gradients(seed: int):
    model = _small_model(seed)
    A = get_random_matrix(9, 6, seed=seed + 20)
    P = make_mask(kRandomEntries, (9,), 0.3, seed=seed)
    y_sub = apply_mask(P, get_random_vector(9, seed=seed + 30))
    for problem in (observation_space_problem(model, P, y_sub),
                    parameter_space_problem(model, P, y_sub),
                    model_space_problem(model, A, P, y_sub)):
        z = problem.z_init + 0.1 * get_random_vector(len(problem.z_init),
                                                     seed=seed + 40)
        _check_gradient(problem, z)


def test_model_space_reaches_feasible_point():
    A, pair = _linear_pair(q=8, n=5, latent_x=3, seed=6)
    x = pair.decode_x(get_random_vector(3, seed=9))
    y = A @ x
    results = model_space_lsi(pair, A, identity_mask((8,)), y,
                              _tight(100, 1e-12), ensemble=3, seed=1)
    assert len(results) == 3
    assert min(r.final_residual for r in results) < 1e-6
    best = min(results, key=lambda r: r.final_residual)
    assert np.allclose(best.x_hat, x, atol=1e-6)
    assert np.allclose(best.y_completed, y, atol=1e-6)


def test_model_space_without_perturbation_is_deterministic():
    model = _small_model(seed=3)
    A = get_random_matrix(9, 6, seed=1)
    P = make_mask(kRandomEntries, (9,), 0.3, seed=4)
    y_sub = apply_mask(P, A @ get_random_vector(6, seed=2))
    config = LsiConfig(LbfgsConfig(max_iterations=5))
    a = model_space_lsi(model, A, P, y_sub, config, perturbation=0.0)
    b = model_space_lsi(model, A, P, y_sub, config, perturbation=0.0)
    assert len(a) == 1
    assert np.array_equal(a[0].z, b[0].z)
    expected = model.encode_x(np.zeros(6))
    assert np.array_equal(a[0].z_init, expected)
    assert a[0].final_residual <= a[0].initial_residual


def test_model_space_starts_at_the_encoded_prior():
    model = _small_model(seed=3)
    A = get_random_matrix(9, 6, seed=1)
    P = make_mask(kRandomEntries, (9,), 0.3, seed=4)
    X = np.abs(get_random_matrix(20, 6, seed=5))
    x_prior = X.mean(axis=0)
    y_sub = apply_mask(P, A @ X[0])
    problem = model_space_problem(model, A, P, y_sub, x_prior)
    expected = model.encode_x(model.normalize_x(x_prior))
    assert np.array_equal(problem.z_init, expected)

    # A flat prior at the scalar mean starts elsewhere.
    flat = model_space_problem(model, A, P, y_sub)
    assert not np.allclose(flat.z_init, expected)

    results = model_space_lsi(model, A, P, y_sub,
                              LsiConfig(LbfgsConfig(max_iterations=2)),
                              x_prior=x_prior, perturbation=0.0)
    assert np.array_equal(results[0].z_init, expected)


def test_ensemble_starts():
    z = get_random_vector(4, seed=1)
    starts = get_ensemble_starts(z, 5, seed=7, perturbation=0.1)
    again = get_ensemble_starts(z, 5, seed=7, perturbation=0.1)
    assert len(starts) == 5
    assert len({s.tobytes() for s in starts}) == 5
    for s, t in zip(starts, again):
        assert np.array_equal(s, t)
    assert max(np.linalg.norm(s - z) for s in starts) < 1.0


def test_ensemble_mean():
    model = _small_model(seed=4)
    A = get_random_matrix(9, 6, seed=2)
    y = A @ get_random_vector(6, seed=3)
    results = model_space_lsi(model, A, identity_mask((9,)), y,
                              LsiConfig(LbfgsConfig(max_iterations=3)),
                              ensemble=4, seed=2)
    expected = sum(r.x_hat for r in results) / 4
    assert np.allclose(ensemble_mean(results), expected)


def test_strong_regularization_stays_at_start():
    _, pair = _linear_pair()
    P = make_mask(kRandomEntries, (8,), 0.25, seed=1)
    y_sub = _masked_observation(pair, P, 11)
    z0 = np.zeros(4)
    free = lsi_observation_space(pair, P, y_sub, _tight(), z0=z0)
    held = lsi_observation_space(pair, P, y_sub,
                                 LsiConfig(LbfgsConfig(), regularization=1e6),
                                 z0=z0)
    assert np.linalg.norm(held.z) < 1e-3 * np.linalg.norm(free.z)


def test_shape_errors():
    _, pair = _linear_pair()
    with pytest.raises(ArgumentError):
        lsi_observation_space(pair, identity_mask((7,)), np.zeros(7))
    with pytest.raises(ArgumentError):
        lsi_observation_space(pair, identity_mask((8,)), np.zeros(7))
    with pytest.raises(ArgumentError):
        model_space_lsi(pair, np.zeros((8, 4)), identity_mask((8,)), np.zeros(8))
    with pytest.raises(ArgumentError):
        model_space_lsi(pair, np.zeros((8, 5)), identity_mask((8,)), np.zeros(8),
                        ensemble=0)
    with pytest.raises(ArgumentError):
        lsi_observation_space(pair, identity_mask((8,)), np.zeros(8),
                              LsiConfig(regularization=-1.0))


def test_tikhonov_identity():
    y = get_random_vector(4, seed=1)
    assert np.allclose(tikhonov_baseline(np.eye(4), y, 1.0), 0.5 * y)


def test_tikhonov_small_weight():
    A = np.eye(4) + 0.2 * get_random_matrix(4, 4, seed=2)
    y = get_random_vector(4, seed=3)
    actual = tikhonov_baseline(A, y, 1e-12)
    assert np.allclose(actual, np.linalg.solve(A, y), atol=1e-4)


def test_tikhonov_normal_equations():
    A = get_random_matrix(12, 5, seed=4)
    y = get_random_vector(12, seed=5)
    lam = 0.3
    x = tikhonov_baseline(A, y, lam)
    residual = A.T @ (A @ x - y) + lam * x
    assert np.linalg.norm(residual) < 1e-8


def test_tikhonov_batch():
    A = get_random_matrix(6, 3, seed=6)
    Y = get_random_matrix(4, 6, seed=7)
    actual = tikhonov_baseline(A, Y, 0.1)
    assert actual.shape == (4, 3)
    for i in range(4):
        assert np.allclose(actual[i], tikhonov_baseline(A, Y[i], 0.1))


def test_tikhonov_errors():
    with pytest.raises(ArgumentError):
        tikhonov_baseline(np.eye(2), np.ones(2), 0.0)
    with pytest.raises(ArgumentError):
        tikhonov_baseline(np.eye(2), np.ones(3), 1.0)
