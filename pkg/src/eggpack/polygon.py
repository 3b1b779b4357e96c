"""Regular polygon containers centred at the origin, parameterised by apothem."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Direction", "RegularPolygon", "apothem_directions", "polygon_area", "side_line"]


@dataclass(frozen=True)
class Direction:
    cx: float
    cy: float

    def __post_init__(self):
        if abs(math.hypot(self.cx, self.cy) - 1.0) > 1e-12:
            raise ValueError(f"direction ({self.cx}, {self.cy}) is not unit-norm")

    @classmethod
    def from_angle(cls, angle: float) -> "Direction":
        return cls(math.cos(angle), math.sin(angle))

    @classmethod
    def normalized(cls, x: float, y: float) -> "Direction":
        n = math.hypot(x, y)
        return cls(x / n, y / n)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy])


def _check_m(m) -> int:
    if int(m) != m or m < 3:
        raise ValueError(f"a polygon needs an integer m >= 3 sides, got {m!r}")
    return int(m)


def apothem_angles(m: int) -> np.ndarray:
    m = _check_m(m)
    k = np.arange(1, m + 1)
    return 2 * k * np.pi / m - np.pi / 2


def apothem_directions(m: int) -> list[Direction]:
    """Outward unit normals of the sides, ``angle_k = 2 k pi / m - pi/2`` for k = 1..m."""
    return [Direction.from_angle(ang) for ang in apothem_angles(m)]


def polygon_area(m: int, d: float) -> float:
    m = _check_m(m)
    if not d > 0:
        raise ValueError(f"apothem must be positive, got {d!r}")
    return m * d * d * math.tan(math.pi / m)


@dataclass(frozen=True)
class RegularPolygon:
    m: int
    d: float

    def __post_init__(self):
        _check_m(self.m)
        if not self.d > 0:
            raise ValueError(f"apothem must be positive, got {self.d!r}")

    @property
    def area(self) -> float:
        return polygon_area(self.m, self.d)

    @property
    def normals(self) -> np.ndarray:
        """``(m, 2)`` array of side normals."""
        ang = apothem_angles(self.m)
        return np.column_stack([np.cos(ang), np.sin(ang)])

    def vertices(self) -> np.ndarray:
        """Corners in counterclockwise order; corner k joins sides k and k+1."""
        ang = apothem_angles(self.m) + np.pi / self.m
        rad = self.d / math.cos(math.pi / self.m)
        return rad * np.column_stack([np.cos(ang), np.sin(ang)])

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all(pts @ self.normals.T <= self.d + tol, axis=1)


def side_line(polygon: RegularPolygon, k: int) -> tuple[Direction, float]:
    """Side ``k`` (1-based) as the line ``{x : direction . x = d}``."""
    if not 1 <= k <= polygon.m:
        raise IndexError(f"side index {k} out of range 1..{polygon.m}")
    return apothem_directions(polygon.m)[k - 1], polygon.d
