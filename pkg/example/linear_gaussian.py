import numpy as np

from pairlab.data import GaussianModelSpec, make_gaussian_dataset
from pairlab.diagnostics import bound_report, spectral_constants
from pairlab.lbfgs import LbfgsConfig
from pairlab.linear import (closed_form_lsi_zy, mmse_oracle,
                            optimal_linear_pair)
from pairlab.lsi import LsiConfig, lsi_observation_space
from pairlab.masks import apply_mask, identity_mask, kRandomEntries, make_mask
from pairlab.random import get_random_matrix, get_random_spd

# A small linear-Gaussian inverse problem y = Ax + noise.
n, q = 10, 14
A = get_random_matrix(q, n, seed=1)
cov_x = get_random_spd(n, seed=2)
cov_noise = 0.01 * np.eye(q)
spec = GaussianModelSpec(np.zeros(n), cov_x, cov_noise)

# With full latent spaces the optimal linear pair is the MMSE estimator.
pair = optimal_linear_pair(A, cov_x, cov_noise, n, q)
test = make_gaussian_dataset(spec, A, 50, seed=3)
_, X_hat = closed_form_lsi_zy(pair, identity_mask((q,)), test.Y)
X_mmse = mmse_oracle(A, cov_x, cov_noise, test.Y)
print("closed form vs MMSE:",
      np.linalg.norm(X_hat - X_mmse) / np.linalg.norm(X_mmse))

# Truncated latents and a mask that drops a third of the entries.
pair = optimal_linear_pair(A, cov_x, cov_noise, 6, 8)
P = make_mask(kRandomEntries, (q,), 1.0 / 3.0, seed=4)
y_sub = apply_mask(P, test.Y[0])
config = LsiConfig(LbfgsConfig(max_iterations=50, gradient_tolerance=1e-10))
iterative = lsi_observation_space(pair, P, y_sub, config)
_, closed = closed_form_lsi_zy(pair, P, y_sub)
print("L-BFGS vs closed form:",
      np.linalg.norm(iterative.x_hat - closed) / np.linalg.norm(closed))

# Stability bound with spectral constants, calibrated on separate samples.
calib = make_gaussian_dataset(spec, A, 100, seed=5)
constants = spectral_constants(pair, A, P, calib.X, calib.Y)
report = bound_report(constants, pair, A, P, test.X, test.Y)
print(f"bound holds on {100.0 * report.error_rate:.1f}% of samples")
print(f"residual bound holds on {100.0 * report.residual_rate:.1f}% of samples")
for s in report.samples[:5]:
    print(f"  sample {s.sample_id}: error {s.actual_error:.4f} "
          f"<= {s.predicted_error:.4f}")
