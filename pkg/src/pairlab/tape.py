from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from pairlab.errors import ArgumentError

Slot = int

kActivations = ("tanh", "elu", "linear")


def activate(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(x)
    if kind == "elu":
        return np.where(x > 0.0, x, np.expm1(np.minimum(x, 0.0)))
    return x


def activate_backward(kind: str, x: np.ndarray, y: np.ndarray,
                       g: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return g * (1.0 - y * y)
    if kind == "elu":
        return g * np.where(x > 0.0, 1.0, y + 1.0)
    return g


class _Op:

    def __init__(self, kind: str, inputs: Tuple[Slot, ...], output: Slot,
                 attr=None):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.attr = attr


class GradientTape:
    """Records a straight-line program over arrays and differentiates it.

    Values live in slots. Leaves are created with `watch`, every other slot is
    the output of exactly one recorded op. `gradient` runs the reverse sweep
    over the recorded ops, `replay` re-runs the forward sweep from the leaves.
    """

    def __init__(self):
        self._values: List[np.ndarray] = []
        self._ops: List[_Op] = []
        self._leaves: List[Slot] = []

    def _push(self, value: np.ndarray) -> Slot:
        self._values.append(value)
        return len(self._values) - 1

    def _record(self, kind: str, inputs: Tuple[Slot, ...], value: np.ndarray,
                attr=None) -> Slot:
        out = self._push(value)
        self._ops.append(_Op(kind, inputs, out, attr))
        return out

    def value(self, slot: Slot) -> np.ndarray:
        return self._values[slot]

    # Recording.

    def watch(self, value: np.ndarray) -> Slot:
        slot = self._push(np.asarray(value, dtype=np.float64))
        self._leaves.append(slot)
        return slot

    def affine(self, x: Slot, w: Slot, b: Slot) -> Slot:
        xv, wv, bv = self._values[x], self._values[w], self._values[b]
        if xv.shape[-1] != wv.shape[1]:
            raise ArgumentError(
                f"affine input width {xv.shape[-1]} does not match weight {wv.shape}"
            )
        return self._record("affine", (x, w, b), xv @ wv.T + bv)

    def activation(self, x: Slot, kind: str) -> Slot:
        if kind not in kActivations:
            raise ArgumentError(f"unknown activation '{kind}'")
        return self._record("activation", (x,),
                            activate(kind, self._values[x]), kind)

    def add(self, a: Slot, b: Slot) -> Slot:
        return self._record("add", (a, b), self._values[a] + self._values[b])

    def sub(self, a: Slot, b: Slot) -> Slot:
        return self._record("sub", (a, b), self._values[a] - self._values[b])

    def scale(self, a: Slot, alpha: float) -> Slot:
        return self._record("scale", (a,), alpha * self._values[a], alpha)

    def squared_norm(self, a: Slot) -> Slot:
        v = self._values[a]
        return self._record("squared_norm", (a,), np.asarray(np.sum(v * v)))

    # Forward replay.

    def replay(self) -> None:
        for op in self._ops:
            ins = [self._values[i] for i in op.inputs]
            if op.kind == "affine":
                value = ins[0] @ ins[1].T + ins[2]
            elif op.kind == "activation":
                value = activate(op.attr, ins[0])
            elif op.kind == "add":
                value = ins[0] + ins[1]
            elif op.kind == "sub":
                value = ins[0] - ins[1]
            elif op.kind == "scale":
                value = op.attr * ins[0]
            else:
                value = np.asarray(np.sum(ins[0] * ins[0]))
            self._values[op.output] = value

    # Reverse sweep.

    def _backward(self, op: _Op, g: np.ndarray,
                  accumulate: Callable[[Slot, np.ndarray], None]) -> None:
        if op.kind == "affine":
            x, w, b = op.inputs
            xv, wv = self._values[x], self._values[w]
            accumulate(x, g @ wv)
            g2 = g.reshape(-1, g.shape[-1])
            accumulate(w, g2.T @ xv.reshape(-1, xv.shape[-1]))
            accumulate(b, g2.sum(axis=0))
        elif op.kind == "activation":
            (x,) = op.inputs
            accumulate(
                x,
                activate_backward(op.attr, self._values[x],
                                   self._values[op.output], g))
        elif op.kind == "add":
            a, b = op.inputs
            accumulate(a, g)
            accumulate(b, g)
        elif op.kind == "sub":
            a, b = op.inputs
            accumulate(a, g)
            accumulate(b, -g)
        elif op.kind == "scale":
            (a,) = op.inputs
            accumulate(a, op.attr * g)
        else:
            (a,) = op.inputs
            accumulate(a, 2.0 * g * self._values[a])

    def gradient(self,
                 target: Slot,
                 sources: Sequence[Slot],
                 seed: Optional[np.ndarray] = None) -> List[np.ndarray]:
        if seed is None:
            if self._values[target].size != 1:
                raise ArgumentError("a non-scalar target needs an explicit seed")
            seed = np.ones_like(self._values[target])
        adjoints: Dict[Slot, np.ndarray] = {
            target: np.asarray(seed, dtype=np.float64)
        }

        def accumulate(slot: Slot, g: np.ndarray) -> None:
            if slot in adjoints:
                adjoints[slot] = adjoints[slot] + g
            else:
                adjoints[slot] = g

        for op in reversed(self._ops):
            if op.output > target:
                continue
            g = adjoints.get(op.output)
            if g is None:
                continue
            self._backward(op, g, accumulate)

        return [
            adjoints.get(s, np.zeros_like(self._values[s])) for s in sources
        ]
