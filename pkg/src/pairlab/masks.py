from typing import Sequence, Tuple, Union

import numpy as np

from pairlab.errors import ArgumentError
from pairlab.random import get_stream, kMaskStream

ObservationShape = Union[Tuple[int], Tuple[int, int]]

kIdentity = "identity"
kRandomColumns = "random-columns"
kBlockColumns = "block-columns"
kRandomEntries = "random-entries"
kMaskKinds = (kIdentity, kRandomColumns, kBlockColumns, kRandomEntries)


class MaskOperator:

    def __init__(self, kind: str, shape: ObservationShape,
                 zeroed: np.ndarray, seed: int, fraction: float):
        self.kind = kind
        self.shape = tuple(int(s) for s in shape)
        self.zeroed = np.sort(np.asarray(zeroed, dtype=np.int64))
        self.seed = seed
        self.fraction = fraction

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def weights(self) -> np.ndarray:
        w = np.ones(self.size)
        w[self.zeroed] = 0.0
        return w

    @property
    def missing_fraction(self) -> float:
        return len(self.zeroed) / self.size if self.size else 0.0

    def __str__(self) -> str:
        return f"{self.kind}({self.fraction:g}, seed={self.seed})"


def _round_units(fraction: float, units: int) -> int:
    return int(round(fraction * units))


def _columns_to_entries(columns: Sequence[int],
                        shape: ObservationShape) -> np.ndarray:
    rows, cols = shape
    columns = np.asarray(columns, dtype=np.int64)
    return (np.arange(rows, dtype=np.int64)[:, None] * cols +
            columns[None, :]).ravel()


def make_mask(kind: str, shape: ObservationShape, fraction: float,
              seed: int) -> MaskOperator:
    if kind not in kMaskKinds:
        raise ArgumentError(f"unknown mask kind '{kind}'")
    if not 0.0 <= fraction <= 1.0:
        raise ArgumentError(f"mask fraction must be in [0, 1], got {fraction}")
    shape = tuple(int(s) for s in shape)
    if len(shape) not in (1, 2) or min(shape) < 1:
        raise ArgumentError(f"invalid observation shape {shape}")
    rng = get_stream(seed, kMaskStream)

    if kind == kIdentity:
        zeroed = np.zeros(0, dtype=np.int64)

    elif kind == kRandomEntries:
        total = int(np.prod(shape))
        zeroed = rng.choice(total, _round_units(fraction, total), replace=False)

    else:
        if len(shape) != 2:
            raise ArgumentError(f"mask kind '{kind}' needs a 2D observation shape")
        cols = shape[1]
        k = _round_units(fraction, cols)
        if kind == kRandomColumns:
            columns = rng.choice(cols, k, replace=False)
        else:
            start = int(rng.integers(0, cols - k + 1))
            columns = np.arange(start, start + k)
        zeroed = _columns_to_entries(columns, shape)

    return MaskOperator(kind, shape, zeroed, seed, fraction)


def identity_mask(shape: ObservationShape) -> MaskOperator:
    return make_mask(kIdentity, shape, 0.0, 0)


def apply_mask(P: MaskOperator, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 0 or y.shape[-1] != P.size:
        raise ArgumentError(
            f"observation of shape {y.shape} does not match mask of size {P.size}")
    y_sub = y.copy()
    y_sub[..., P.zeroed] = 0.0
    return y_sub


def mask_rows(P: MaskOperator, M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != P.size:
        raise ArgumentError(
            f"matrix of shape {M.shape} does not match mask of size {P.size}")
    masked = M.copy()
    masked[P.zeroed, :] = 0.0
    return masked


def is_masked(P: MaskOperator, y: np.ndarray) -> bool:
    return bool(np.all(np.asarray(y)[..., P.zeroed] == 0.0))
