import numpy as np
import pytest
from pytest import approx

from pairlab.errors import ArgumentError
from pairlab.networks import MlpSpec, init_mlp, parameter_shapes, zero_mlp
from pairlab.random import get_random_matrix, get_random_vector
from pairlab.tape import GradientTape, activate


def _program(x, w, b, kind):
    h = activate(kind, x @ w.T + b)
    return float(np.sum(h * h))


@pytest.mark.parametrize("kind", ["tanh", "elu", "linear"])
def test_gradient_matches_finite_differences(kind: str):
    x = get_random_matrix(3, 4, seed=1)
    w = get_random_matrix(5, 4, seed=2)
    b = get_random_vector(5, seed=3)

    tape = GradientTape()
    slots = [tape.watch(v) for v in (x, w, b)]
    h = tape.activation(tape.affine(*slots), kind)
    out = tape.squared_norm(h)
    assert float(tape.value(out)) == approx(_program(x, w, b, kind))
    grads = tape.gradient(out, slots)

    step = 1e-6
    values = [x, w, b]
    for which, grad in enumerate(grads):
        flat = values[which].ravel()
        for k in range(0, flat.size, 3):
            plus = [v.copy() for v in values]
            minus = [v.copy() for v in values]
            plus[which].ravel()[k] += step
            minus[which].ravel()[k] -= step
            expected = (_program(*plus, kind) - _program(*minus, kind)) / (2 * step)
            assert grad.ravel()[k] == approx(expected, rel=1e-5, abs=1e-7)


def test_elementwise_ops():
    tape = GradientTape()
    a = tape.watch(np.array([1.0, 2.0]))
    b = tape.watch(np.array([3.0, -1.0]))
    c = tape.sub(tape.add(a, tape.scale(b, 2.0)), a)

    # c = 2b, so d/db ||c||^2 = 8b and a drops out.
    out = tape.squared_norm(c)
    ga, gb = tape.gradient(out, [a, b])
    assert list(ga) == approx([0.0, 0.0])
    assert list(gb) == approx([24.0, -8.0])


def test_explicit_seed():
    tape = GradientTape()
    x = tape.watch(np.array([1.0, -2.0, 0.5]))
    y = tape.scale(x, 3.0)
    with pytest.raises(ArgumentError):
        tape.gradient(y, [x])
    (g,) = tape.gradient(y, [x], seed=np.array([1.0, 0.0, 2.0]))
    assert list(g) == [3.0, 0.0, 6.0]


def test_unused_source_has_zero_gradient():
    tape = GradientTape()
    x = tape.watch(np.ones(2))
    unused = tape.watch(np.ones(3))
    out = tape.squared_norm(x)
    _, g = tape.gradient(out, [x, unused])
    assert not np.any(g)


def test_replay_is_bitwise():
    tape = GradientTape()
    x = tape.watch(get_random_matrix(2, 3, seed=4))
    w = tape.watch(get_random_matrix(4, 3, seed=5))
    b = tape.watch(get_random_vector(4, seed=6))
    out = tape.squared_norm(tape.activation(tape.affine(x, w, b), "tanh"))
    before = tape.value(out).copy()
    tape.replay()
    assert np.array_equal(tape.value(out), before)


def test_errors():
    tape = GradientTape()
    x = tape.watch(np.ones(3))
    w = tape.watch(np.ones((2, 4)))
    b = tape.watch(np.zeros(2))
    with pytest.raises(ArgumentError):
        tape.affine(x, w, b)
    with pytest.raises(ArgumentError):
        tape.activation(x, "relu")


def test_mlp_vjp_matches_finite_differences():
    spec = MlpSpec([4, 6, 3], "tanh")
    net = init_mlp(spec, seed=1, index=0)
    v = get_random_vector(4, seed=2)
    g = get_random_vector(3, seed=3)
    actual = net.vjp(v, g)
    step = 1e-6
    for k in range(4):
        e = np.zeros(4)
        e[k] = step
        expected = float(g @ (net(v + e) - net(v - e))) / (2 * step)
        assert actual[k] == approx(expected, rel=1e-5, abs=1e-8)


def test_mlp_shapes_and_zero_network():
    spec = MlpSpec([5, 7, 2], "elu")
    assert parameter_shapes(spec) == [(7, 5), (7,), (2, 7), (2,)]
    net = zero_mlp(spec)
    assert not np.any(net(get_random_matrix(3, 5, seed=1)))
    with pytest.raises(ArgumentError):
        net(np.zeros(4))


def test_init_is_deterministic_and_bounded():
    spec = MlpSpec([8, 4], "tanh")
    a = init_mlp(spec, seed=3, index=1)
    b = init_mlp(spec, seed=3, index=1)
    c = init_mlp(spec, seed=3, index=2)
    assert np.array_equal(a.weights[0], b.weights[0])
    assert not np.array_equal(a.weights[0], c.weights[0])
    assert np.abs(a.weights[0]).max() <= np.sqrt(6.0 / 12.0)
    assert not np.any(a.offsets[0])


def test_spec_errors():
    with pytest.raises(ArgumentError):
        MlpSpec([3])
    with pytest.raises(ArgumentError):
        MlpSpec([3, 0, 2])
    with pytest.raises(ArgumentError):
        MlpSpec([3, 2], "sigmoid")
