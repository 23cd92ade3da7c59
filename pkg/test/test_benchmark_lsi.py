from typing import Any

from pairlab.lbfgs import LbfgsConfig
from pairlab.lsi import LsiConfig, lsi_observation_space, model_space_lsi
from pairlab.masks import apply_mask, kRandomColumns, make_mask
from pairlab.pair import default_pair_spec, init_model
from pairlab.phantoms import generate_phantoms
from pairlab.tomography import build_radon


def _setup():
    op = build_radon(16, 30, 23, 1.0)
    spec = default_pair_spec(op.n, op.q, 32, 32, (128,), (256,))
    model = init_model(spec, seed=0)
    P = make_mask(kRandomColumns, op.geometry.observation_shape, 0.5, seed=1)
    x = generate_phantoms(16, 1, seed=2)[0]
    return op, model, P, apply_mask(P, op.apply(x))


def test_benchmark_lsi_observation_space(benchmark: Any):
    _, model, P, y_sub = _setup()
    config = LsiConfig(LbfgsConfig(max_iterations=10))
    result = benchmark(lsi_observation_space, model, P, y_sub, config)
    assert result.final_residual <= result.initial_residual


def test_benchmark_model_space_lsi(benchmark: Any):
    op, model, P, y_sub = _setup()
    config = LsiConfig(LbfgsConfig(max_iterations=10))
    results = benchmark(model_space_lsi, model, op, P, y_sub, config)
    assert results[0].final_residual <= results[0].initial_residual
