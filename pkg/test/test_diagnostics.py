import math

import numpy as np
import pytest
from pytest import approx

from pairlab.data import GaussianModelSpec, make_gaussian_dataset
from pairlab.diagnostics import (BoundConstants, MetricsRecord, bound_report,
                                 estimate_constants, kMetricsColumns,
                                 ood_metrics, rre, spectral_constants, ssim,
                                 surrogate_forward)
from pairlab.errors import ArgumentError
from pairlab.linear import optimal_linear_pair
from pairlab.masks import identity_mask, kRandomEntries, make_mask
from pairlab.pair import default_pair_spec, init_model
from pairlab.random import get_random_matrix, get_random_spd, get_random_vector


def _linear_gaussian(q: int = 10, n: int = 6, latent_x: int = 4,
                     latent_y: int = 6):
    A = get_random_matrix(q, n, seed=1)
    cov_x = get_random_spd(n, seed=2)
    spec = GaussianModelSpec(np.zeros(n), cov_x, 0.01 * np.eye(q))
    pair = optimal_linear_pair(A, cov_x, spec.cov_noise, latent_x, latent_y)
    calib = make_gaussian_dataset(spec, A, 50, seed=3)
    test = make_gaussian_dataset(spec, A, 50, seed=4)
    return A, pair, calib, test


def test_rre():
    x = get_random_vector(8, seed=1)
    assert rre(x, x) == 0.0
    assert rre(0.9 * x, x) == approx(0.1)
    with pytest.raises(ArgumentError):
        rre(x, np.zeros(8))
    with pytest.raises(ArgumentError):
        rre(x, x[:4])


def test_ssim_identical():
    a = get_random_matrix(12, 12, seed=2)
    assert ssim(a, a) == approx(1.0)


def test_ssim_constant_images():
    a = np.zeros((8, 8))
    b = np.ones((8, 8))
    assert ssim(a, b, dynamic_range=1.0) == approx(1e-4 / 1.0001, rel=1e-6)

    # A constant reference falls back to unit range.
    assert ssim(a, b) == approx(1e-4 / 1.0001, rel=1e-6)


def test_ssim_prefers_the_closer_image():
    b = get_random_matrix(16, 16, seed=3)
    noise = get_random_matrix(16, 16, seed=4)
    near = ssim(b + 0.05 * noise, b)
    far = ssim(b + 0.5 * noise, b)
    assert far < near < 1.0
    assert far > -1.0


def test_ssim_errors():
    with pytest.raises(ArgumentError):
        ssim(np.zeros(4), np.zeros(4))
    with pytest.raises(ArgumentError):
        ssim(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ArgumentError):
        ssim(np.zeros((4, 4)), np.zeros((4, 4)), dynamic_range=0.0)


def test_metrics_record():
    record = MetricsRecord(sample_id=3, method="pair", rre=0.5)
    row = record.to_row()
    assert tuple(row) == kMetricsColumns
    assert row["sample_id"] == 3
    assert math.isnan(row["ssim"])


def test_ood_metrics_of_an_exact_pair():
    n = 5
    pair = optimal_linear_pair(np.eye(n), np.eye(n), np.eye(n), n, n)
    y = get_random_vector(n, seed=5)
    assert np.allclose(surrogate_forward(pair, y), y)
    record = ood_metrics(pair, y, pair.encode_y(y), y)
    assert record.residual_estimate == approx(0.0, abs=1e-12)
    assert record.autoencode_diff == approx(0.0, abs=1e-12)

    record = ood_metrics(pair, 2.0 * y, np.zeros(n), y)
    assert record.residual_estimate == approx(1.0)
    assert record.autoencode_diff == approx(1.0)
    with pytest.raises(ArgumentError):
        ood_metrics(pair, y, np.zeros(n), np.zeros(n))


def test_ood_metrics_of_a_model():
    model = init_model(default_pair_spec(6, 9, 3, 4, (5,), (7,)), seed=1)
    x = get_random_vector(6, seed=2)
    y = get_random_vector(9, seed=3)
    record = ood_metrics(model, x, model.encode_y(y), y)
    assert record.residual_estimate >= 0.0
    assert math.isfinite(record.autoencode_diff)


def test_orthonormal_decoder_constants():
    A, pair, calib, _ = _linear_gaussian()
    P = make_mask(kRandomEntries, (10,), 0.3, seed=1)
    constants = estimate_constants(pair, A, calib.X, calib.Y, P, pair_count=32)
    assert constants.L_dx == approx(1.0)
    assert constants.L_ey <= 1.0 + 1e-12
    assert constants.sampled

    spectral = spectral_constants(pair, A, P, calib.X, calib.Y, pair_count=32)
    assert spectral.L_dx == approx(1.0)
    assert spectral.L_ey == approx(1.0)
    assert not spectral.sampled


def test_autoencoder_error_matches_projection():
    A, pair, calib, _ = _linear_gaussian()
    P = identity_mask((10,))
    constants = estimate_constants(pair, A, calib.X, calib.Y, P)
    U = pair.D_y
    expected = max(
        np.linalg.norm(U @ (U.T @ y) - y) for y in pair.normalize_y(calib.Y))
    assert constants.eps_y == approx(expected)


def test_mask_ratios():
    A, pair, calib, _ = _linear_gaussian()
    full = estimate_constants(pair, A, calib.X, calib.Y, identity_mask((10,)))
    assert full.alpha_P == approx(1.0)
    assert full.beta_P == approx(1.0)

    P = make_mask(kRandomEntries, (10,), 0.4, seed=2)
    masked = estimate_constants(pair, A, calib.X, calib.Y, P)
    assert 0.0 < masked.alpha_P <= masked.beta_P <= 1.0


def test_constants_are_deterministic():
    A, pair, calib, _ = _linear_gaussian()
    P = make_mask(kRandomEntries, (10,), 0.3, seed=3)
    a = estimate_constants(pair, A, calib.X, calib.Y, P, seed=5)
    b = estimate_constants(pair, A, calib.X, calib.Y, P, seed=5)
    assert a.to_dict() == b.to_dict()


def test_spectral_certificate_holds():
    A, pair, calib, test = _linear_gaussian()
    P = make_mask(kRandomEntries, (10,), 0.3, seed=4)
    constants = spectral_constants(pair, A, P, calib.X, calib.Y)
    report = bound_report(constants, pair, A, P, test.X, test.Y)
    assert len(report.samples) == 50
    assert not any(s.vacuous for s in report.samples)
    assert report.error_rate == 1.0
    assert report.residual_rate == 1.0
    assert report.first_step_rate == 1.0
    assert all(math.isfinite(s.predicted_error) for s in report.samples)


def test_bound_report_with_a_model():
    A = get_random_matrix(9, 6, seed=1)
    model = init_model(default_pair_spec(6, 9, 3, 4, (5,), (7,)), seed=2)
    X = get_random_matrix(6, 6, seed=3)
    Y = X @ A.T
    P = make_mask(kRandomEntries, (9,), 0.3, seed=1)
    constants = estimate_constants(model, A, X[:4], Y[:4], P, pair_count=16)
    report = bound_report(constants, model, A, P, X[4:], Y[4:],
                          sample_ids=[10, 11])
    assert [s.sample_id for s in report.samples] == [10, 11]
    assert report.first_step_rate == 1.0


def test_vacuous_constants():
    constants = BoundConstants(0.1, 0.1, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0,
                               0.0)
    assert constants.vacuous
    assert constants.error_bound() == math.inf
    assert constants.residual_bound(1.0) == math.inf


def test_full_mask_is_vacuous():
    A, pair, calib, test = _linear_gaussian()
    P = make_mask(kRandomEntries, (10,), 1.0, seed=1)
    constants = estimate_constants(pair, A, calib.X, calib.Y, P)
    assert constants.alpha_P == 0.0
    report = bound_report(constants, pair, A, P, test.X[:3], test.Y[:3])
    assert all(s.vacuous for s in report.samples)
    assert report.error_rate == 1.0


def test_bound_formula():
    constants = BoundConstants(eps_x=0.1, eps_y=0.2, gamma_m=0.3, delta=0.4,
                               L_dx=2.0, L_mbwd=3.0, L_ey=0.5, L_A=4.0,
                               alpha_P=0.5, beta_P=1.0)
    expected = 2.0 * (3.0 * 0.5 * (1.0 / 0.5 * 0.2 + 0.4) + 0.3) + 0.1
    assert constants.error_bound() == approx(expected)
    assert constants.residual_bound(0.5) == approx(4.0 * expected + 0.5)


def test_estimate_errors():
    A, pair, calib, _ = _linear_gaussian()
    P = identity_mask((10,))
    with pytest.raises(ArgumentError):
        estimate_constants(pair, A, calib.X[:3], calib.Y[:2], P)
    with pytest.raises(ArgumentError):
        estimate_constants(pair, A, calib.X, calib.Y, P, pair_count=0)

