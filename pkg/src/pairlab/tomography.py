import logging
from math import cos, radians, sin
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from pairlab.errors import ArgumentError

logger = logging.getLogger(__name__)

Vec2 = Tuple[float, float]

kDefaultGridSide = 32
kDefaultAngleCount = 60
kDefaultDetectorCount = 47
kDefaultDetectorSpacing = 1.0
kMinSegmentLength = 1e-12


class Geometry:

    def __init__(self, grid_side: int, angles_deg: Sequence[float],
                 detector_count: int, detector_spacing: float):
        self.grid_side = grid_side
        self.angles_deg = [float(a) for a in angles_deg]
        self.detector_count = detector_count
        self.detector_spacing = detector_spacing

    @property
    def angle_count(self) -> int:
        return len(self.angles_deg)

    @property
    def observation_shape(self) -> Tuple[int, int]:
        return self.detector_count, self.angle_count

    def detector_offsets(self) -> np.ndarray:
        j = np.arange(self.detector_count, dtype=np.float64)
        return (j - 0.5 * (self.detector_count - 1)) * self.detector_spacing

    def to_dict(self) -> dict:
        return {
            "grid_side": self.grid_side,
            "angles_deg": self.angles_deg,
            "detector_count": self.detector_count,
            "detector_spacing": self.detector_spacing,
        }


class ForwardOperator:

    def __init__(self, matrix: np.ndarray, geometry: Geometry):
        self.matrix = matrix
        self.geometry = geometry

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def q(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.matrix.T

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) @ self.matrix

    def sinogram(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y).reshape(self.geometry.observation_shape)


def _ray_index(geometry: Geometry, angle_idx: int, detector_idx: int) -> int:
    return detector_idx * geometry.angle_count + angle_idx


def _get_clipping_slabs(half: float) -> Iterator[Tuple[int, float, float]]:

    # One slab per axis, the image box is their intersection.
    for axis in range(2):
        yield axis, -half, half


def _get_visible_ray_interval(p: Vec2, v: Vec2,
                              half: float) -> Optional[Tuple[float, float]]:
    t_start, t_end = -np.inf, np.inf
    for axis, lo, hi in _get_clipping_slabs(half):
        pa, va = p[axis], v[axis]

        # Parallel rays are visible only strictly inside the slab. Grazing rays
        # along the boundary contribute nothing.
        if va == 0.0:
            if not lo < pa < hi:
                return None
            continue

        # Intersect with both boundary planes.
        t_lo, t_hi = (lo - pa) / va, (hi - pa) / va
        if t_lo > t_hi:
            t_lo, t_hi = t_hi, t_lo
        t_start = max(t_start, t_lo)
        t_end = min(t_end, t_hi)
    if t_end - t_start <= kMinSegmentLength:
        return None
    return t_start, t_end


def _get_grid_crossings(pa: float, va: float, grid_side: int,
                        t_start: float, t_end: float) -> np.ndarray:
    if va == 0.0:
        return np.zeros(0)
    lines = np.arange(grid_side + 1, dtype=np.float64) - 0.5 * grid_side
    ts = (lines - pa) / va
    return ts[(ts > t_start) & (ts < t_end)]


def _snap(c: float) -> float:
    return 0.0 if abs(c) < kMinSegmentLength else c


def _get_edge_axis(p: Vec2, v: Vec2, grid_side: int) -> Optional[int]:
    """Axis across which an axis-parallel ray sits on an interior pixel edge."""
    for axis in range(2):
        if v[axis] != 0.0:
            continue
        edge = p[axis] + 0.5 * grid_side
        if edge == np.floor(edge) and 0.0 < edge < grid_side:
            return axis
    return None


def get_ray_row(geometry: Geometry, angle_deg: float,
                offset: float) -> np.ndarray:
    N = geometry.grid_side
    row = np.zeros(N * N)
    theta = radians(angle_deg)
    c, s = _snap(cos(theta)), _snap(sin(theta))
    p = offset * c, offset * s
    v = -s, c

    # Clip the ray to the image box.
    interval = _get_visible_ray_interval(p, v, 0.5 * N)
    if interval is None:
        return row
    t_start, t_end = interval

    # Split the visible ray at every pixel boundary it crosses.
    ts = np.concatenate([
        [t_start],
        _get_grid_crossings(p[0], v[0], N, t_start, t_end),
        _get_grid_crossings(p[1], v[1], N, t_start, t_end),
        [t_end],
    ])
    ts = np.sort(ts)
    lengths = np.diff(ts)
    keep = lengths > kMinSegmentLength
    lengths = lengths[keep]
    mids = 0.5 * (ts[:-1] + ts[1:])[keep]

    # Attribute each segment to the pixel containing its midpoint. A ray along
    # a pixel edge shares its chord evenly between the pixels on either side.
    ix = np.floor(p[0] + mids * v[0] + 0.5 * N).astype(np.int64)
    iy = np.floor(p[1] + mids * v[1] + 0.5 * N).astype(np.int64)
    shifts = [(0, 0)]
    axis = _get_edge_axis(p, v, N)
    if axis is not None:
        shifts = [(0, 0), (1, 0) if axis == 0 else (0, 1)]
        lengths = 0.5 * lengths
    for sx, sy in shifts:
        jx, jy = ix - sx, iy - sy
        inside = (jx >= 0) & (jx < N) & (jy >= 0) & (jy < N)
        np.add.at(row, jy[inside] * N + jx[inside], lengths[inside])
    return row


def get_uniform_angles(angle_count: int) -> List[float]:
    return [180.0 * i / angle_count for i in range(angle_count)]


def build_radon(grid_side: int = kDefaultGridSide,
                angle_count: int = kDefaultAngleCount,
                detector_count: int = kDefaultDetectorCount,
                detector_spacing: float = kDefaultDetectorSpacing,
                angles_deg: Optional[Sequence[float]] = None) -> ForwardOperator:
    if angles_deg is None:
        if angle_count < 1:
            raise ArgumentError(f"angle count must be positive, got {angle_count}")
        angles_deg = get_uniform_angles(angle_count)
    if grid_side < 1 or detector_count < 1 or len(angles_deg) < 1:
        raise ArgumentError("grid side, angle and detector counts must be positive")
    if detector_spacing <= 0.0:
        raise ArgumentError(
            f"detector spacing must be positive, got {detector_spacing}")
    geometry = Geometry(grid_side, angles_deg, detector_count, detector_spacing)

    # One row per (detector, angle) ray.
    matrix = np.zeros((geometry.detector_count * geometry.angle_count,
                       grid_side * grid_side))
    offsets = geometry.detector_offsets()
    for i, angle in enumerate(geometry.angles_deg):
        for j, offset in enumerate(offsets):
            matrix[_ray_index(geometry, i, j)] = get_ray_row(
                geometry, angle, offset)
    logger.debug("built radon operator with %d rays over a %dx%d grid",
                 matrix.shape[0], grid_side, grid_side)
    return ForwardOperator(matrix, geometry)


def forward_operator_from_dict(d: dict) -> ForwardOperator:
    return build_radon(grid_side=int(d["grid_side"]),
                       detector_count=int(d["detector_count"]),
                       detector_spacing=float(d["detector_spacing"]),
                       angles_deg=[float(a) for a in d["angles_deg"]])
