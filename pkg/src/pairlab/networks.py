from typing import List, Sequence, Tuple

import numpy as np

from pairlab.errors import ArgumentError
from pairlab.random import get_stream, kInitStream
from pairlab.tape import GradientTape, Slot, activate, kActivations


class MlpSpec:

    def __init__(self, widths: Sequence[int], activation: str = "tanh"):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2:
            raise ArgumentError("a network needs at least one layer")
        if min(widths) < 1:
            raise ArgumentError(f"layer widths must be positive, got {widths}")
        if activation not in kActivations:
            raise ArgumentError(f"unknown activation '{activation}'")
        self.widths = widths
        self.activation = activation

    @property
    def input_width(self) -> int:
        return self.widths[0]

    @property
    def output_width(self) -> int:
        return self.widths[-1]

    @property
    def layer_count(self) -> int:
        return len(self.widths) - 1

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "activation": self.activation}

    @staticmethod
    def from_dict(d: dict) -> "MlpSpec":
        return MlpSpec(d["widths"], d.get("activation", "tanh"))

    def __eq__(self, other) -> bool:
        return isinstance(
            other, MlpSpec
        ) and self.widths == other.widths and self.activation == other.activation


class Mlp:
    """Dense network with a linear final layer."""

    def __init__(self, spec: MlpSpec, weights: List[np.ndarray],
                 offsets: List[np.ndarray]):
        if len(weights) != spec.layer_count or len(offsets) != spec.layer_count:
            raise ArgumentError("parameter count does not match the layer count")
        for k, (w, b) in enumerate(zip(weights, offsets)):
            expected = spec.widths[k + 1], spec.widths[k]
            if w.shape != expected or b.shape != (expected[0],):
                raise ArgumentError(
                    f"layer {k} parameters {w.shape}, {b.shape} do not match {expected}"
                )
        self.spec = spec
        self.weights = weights
        self.offsets = offsets

    def parameters(self) -> List[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.offsets):
            params.append(w)
            params.append(b)
        return params

    def copy(self) -> "Mlp":
        return Mlp(self.spec, [w.copy() for w in self.weights],
                   [b.copy() for b in self.offsets])

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.spec.input_width:
            raise ArgumentError(
                f"input of width {v.shape[-1]} does not match {self.spec.input_width}"
            )
        for k, (w, b) in enumerate(zip(self.weights, self.offsets)):
            v = v @ w.T + b
            if k < self.spec.layer_count - 1:
                v = activate(self.spec.activation, v)
        return v

    def record(self, tape: GradientTape, x: Slot,
               params: Sequence[Slot]) -> Slot:
        for k in range(self.spec.layer_count):
            x = tape.affine(x, params[2 * k], params[2 * k + 1])
            if k < self.spec.layer_count - 1:
                x = tape.activation(x, self.spec.activation)
        return x

    def watch(self, tape: GradientTape) -> List[Slot]:
        return [tape.watch(p) for p in self.parameters()]

    def vjp(self, v: np.ndarray, g: np.ndarray) -> np.ndarray:
        tape = GradientTape()
        x = tape.watch(v)
        out = self.record(tape, x, self.watch(tape))
        (grad,) = tape.gradient(out, [x], seed=g)
        return grad


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_mlp(spec: MlpSpec, seed: int, index: int) -> Mlp:
    rng = get_stream(seed, kInitStream, index)
    weights, offsets = [], []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        bound = glorot_bound(fan_in, fan_out)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        offsets.append(np.zeros(fan_out))
    return Mlp(spec, weights, offsets)


def zero_mlp(spec: MlpSpec) -> Mlp:
    weights = [
        np.zeros((fan_out, fan_in))
        for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:])
    ]
    offsets = [np.zeros(w) for w in spec.widths[1:]]
    return Mlp(spec, weights, offsets)


def parameter_shapes(spec: MlpSpec) -> List[Tuple[int, ...]]:
    shapes: List[Tuple[int, ...]] = []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        shapes.append((fan_out, fan_in))
        shapes.append((fan_out,))
    return shapes
