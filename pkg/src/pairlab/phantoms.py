from math import pi
from typing import Tuple

import numpy as np

from pairlab.errors import ArgumentError
from pairlab.random import get_stream, kPhantomStream

Range = Tuple[float, float]
CountRange = Tuple[int, int]

kDefaultEllipseCount = 2, 6
kDefaultIntensity = 0.2, 0.6
kOodEllipseCount = 5, 9
kOodIntensity = 0.5, 0.9
kCenterExtent = 0.8
kSemiAxis = 0.1, 0.35


def get_pixel_centers(grid_side: int) -> Tuple[np.ndarray, np.ndarray]:
    c = np.arange(grid_side, dtype=np.float64) + 0.5 - 0.5 * grid_side
    ys, xs = np.meshgrid(c, c, indexing="ij")
    return xs, ys


def get_ellipse_phantom(grid_side: int, center: Tuple[float, float],
                        semi_axes: Tuple[float, float], rotation: float,
                        intensity: float) -> np.ndarray:
    xs, ys = get_pixel_centers(grid_side)
    cx, cy = center
    a, b = semi_axes
    c, s = np.cos(rotation), np.sin(rotation)

    # Rotate pixel centers into the ellipse frame.
    u = c * (xs - cx) + s * (ys - cy)
    v = -s * (xs - cx) + c * (ys - cy)
    inside = (u / a)**2 + (v / b)**2 <= 1.0
    return np.where(inside, intensity, 0.0)


def get_random_phantom(grid_side: int, rng: np.random.Generator,
                       ellipse_count: CountRange = kDefaultEllipseCount,
                       intensity: Range = kDefaultIntensity) -> np.ndarray:
    image = np.zeros((grid_side, grid_side))
    half_extent = 0.5 * kCenterExtent * grid_side
    count = int(rng.integers(ellipse_count[0], ellipse_count[1] + 1))
    for _ in range(count):
        center = tuple(rng.uniform(-half_extent, half_extent, size=2))
        semi_axes = tuple(
            rng.uniform(kSemiAxis[0] * grid_side, kSemiAxis[1] * grid_side,
                        size=2))
        rotation = rng.uniform(0.0, pi)
        value = rng.uniform(intensity[0], intensity[1])
        image += get_ellipse_phantom(grid_side, center, semi_axes, rotation,
                                     value)
    return np.clip(image, 0.0, 1.0)


def generate_phantoms(grid_side: int,
                      count: int,
                      seed: int,
                      ellipse_count: CountRange = kDefaultEllipseCount,
                      intensity: Range = kDefaultIntensity) -> np.ndarray:
    if count < 1 or grid_side < 1:
        raise ArgumentError("phantom count and grid side must be positive")
    X = np.empty((count, grid_side * grid_side))
    for i in range(count):
        rng = get_stream(seed, kPhantomStream, i)
        X[i] = get_random_phantom(grid_side, rng, ellipse_count,
                                  intensity).ravel()
    return X


def generate_ood_phantoms(grid_side: int, count: int, seed: int) -> np.ndarray:
    return generate_phantoms(grid_side, count, seed, kOodEllipseCount,
                             kOodIntensity)
