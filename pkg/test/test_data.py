import numpy as np
import pytest
from pytest import approx

from pairlab.data import (Dataset, GaussianModelSpec, Normalization,
                          compute_normalization, make_gaussian_dataset,
                          make_tomography_dataset, sample_gaussian_models,
                          simulate_observations)
from pairlab.errors import ArgumentError
from pairlab.random import get_random_matrix, get_random_spd
from pairlab.tomography import build_radon


def test_noise_free_observations():
    A = get_random_matrix(5, 3, seed=1)
    X = get_random_matrix(4, 3, seed=2)
    assert np.array_equal(simulate_observations(A, X, 0.0, seed=0), X @ A.T)


def test_exact_noise_rescaling():
    A = np.eye(2)
    x = np.array([6.0, 8.0])
    y = simulate_observations(A, x, 0.1, seed=3)[0]
    assert np.linalg.norm(y - x) == approx(1.0, abs=1e-12)


def test_noise_depends_on_seed_not_its_size():
    A = get_random_matrix(6, 4, seed=1)
    X = get_random_matrix(3, 4, seed=2)
    clean = X @ A.T
    Y1 = simulate_observations(A, X, 0.2, seed=1)
    Y2 = simulate_observations(A, X, 0.2, seed=2)
    assert not np.allclose(Y1, Y2)
    for i in range(3):
        expected = 0.2 * np.linalg.norm(clean[i])
        assert np.linalg.norm(Y1[i] - clean[i]) == approx(expected)
        assert np.linalg.norm(Y2[i] - clean[i]) == approx(expected)


def test_negative_noise_fraction():
    with pytest.raises(ArgumentError):
        simulate_observations(np.eye(2), np.ones(2), -0.1, seed=0)


def test_degenerate_covariance():
    mean = np.array([1.0, -2.0, 3.0])
    spec = GaussianModelSpec(mean, 1e-12 * np.eye(3), np.eye(2))
    X = sample_gaussian_models(spec, 20, seed=0)
    assert np.allclose(X, mean, atol=1e-4)


def test_sample_moments():
    n = 4
    mean = np.array([1.0, 0.0, -1.0, 2.0])
    cov = get_random_spd(n, seed=3)
    spec = GaussianModelSpec(mean, cov, np.eye(2))
    count = 10000
    X = sample_gaussian_models(spec, count, seed=5)

    # Mean within five standard errors.
    errors = np.abs(X.mean(axis=0) - mean)
    assert np.all(errors < 5.0 * np.sqrt(np.diag(cov) / count))

    # Second moment within ten percent.
    centered = X - mean
    second = centered.T @ centered / count
    assert np.all(np.abs(second - cov) <= 0.1 * np.sqrt(np.outer(np.diag(cov), np.diag(cov))))


def test_non_spd_covariance():
    spec = GaussianModelSpec(np.zeros(2), np.diag([1.0, -1.0]), np.eye(2))
    with pytest.raises(ArgumentError):
        sample_gaussian_models(spec, 3, seed=0)


def test_spec_shape_checks():
    with pytest.raises(ArgumentError):
        GaussianModelSpec(np.zeros(3), np.eye(2), np.eye(2))
    spec = GaussianModelSpec(np.zeros(3), np.eye(3), np.eye(2))
    with pytest.raises(ArgumentError):
        make_gaussian_dataset(spec, np.eye(3), 4, seed=0)


def test_gaussian_dataset():
    spec = GaussianModelSpec(np.zeros(3), np.eye(3), 0.01 * np.eye(2))
    A = get_random_matrix(2, 3, seed=0)
    D = make_gaussian_dataset(spec, A, 8, seed=1)
    assert (D.count, D.n, D.q) == (8, 3, 2)
    assert D.provenance["generator"] == "gaussian"


def test_normalization():
    X = np.array([[1.0, 3.0], [5.0, 7.0]])
    Y = np.array([[2.0], [2.0]])
    N = compute_normalization(X, Y)
    assert N.x_mean == 4.0
    assert N.x_std == approx(np.sqrt(5.0))

    # Constant observations fall back to unit scale.
    assert N.y_std == 1.0
    x = np.array([0.5, -2.0])
    assert np.allclose(N.denormalize_x(N.normalize_x(x)), x)
    assert Normalization.from_dict(N.to_dict()).to_dict() == N.to_dict()
    with pytest.raises(ArgumentError):
        Normalization(0.0, 0.0, 0.0, 1.0)


def test_dataset_checks_counts():
    with pytest.raises(ArgumentError):
        Dataset(np.zeros((3, 2)), np.zeros((4, 2)))


def test_subset_keeps_normalization():
    D = Dataset(get_random_matrix(5, 2, seed=1), get_random_matrix(5, 3, seed=2))
    S = D.subset([0, 2])
    assert S.count == 2
    assert S.normalization is D.normalization
    assert np.array_equal(S.X[1], D.X[2])


def test_tomography_dataset():
    A = build_radon(grid_side=6, angle_count=5, detector_count=7)
    D = make_tomography_dataset(A, 4, seed=2, noise_fraction=0.1)
    assert (D.count, D.n, D.q) == (4, 36, 35)
    assert D.shapes == {"x": [6, 6], "y": [7, 5]}
    assert D.provenance["noise_fraction"] == 0.1
    clean = A.apply(D.X)
    for i in range(4):
        expected = 0.1 * np.linalg.norm(clean[i])
        assert np.linalg.norm(D.Y[i] - clean[i]) == approx(expected)

    # A supplied normalization is kept as is.
    O = make_tomography_dataset(A, 2, seed=3, noise_fraction=0.1, ood=True,
                                normalization=D.normalization)
    assert O.normalization is D.normalization
    assert O.provenance["generator"] == "ood-ellipses"
