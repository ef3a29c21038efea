"""Lines, cylinders, the hexagonal tiling and the rough surface over it.

The surface is the graph of ``x -> dist(x, boundary of the tiling)`` over the
plane. With the default period of 2000 the face centers sit 2000 apart, the
apothem is 1000, so the surface lives in the slab ``R^2 x [0, 1000]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

TOL = 1e-9
SQRT3 = math.sqrt(3.0)
DEFAULT_PERIOD = 2000.0


def canonical_direction(d):
    """Normalize ``d`` and flip it so its first nonzero coordinate is positive.

    Works on a single vector or on an ``(N, 3)`` stack.
    """
    d = np.asarray(d, dtype=float)
    norm = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("zero direction vector")
    d = d / norm
    nz = d != 0
    first = np.argmax(nz, axis=-1)
    lead = np.take_along_axis(d, first[..., None], axis=-1)
    return np.where(lead < 0, -d, d)


def canonical_anchor(p, d):
    """Point of the line ``p + t d`` closest to the origin (``d`` unit)."""
    p = np.asarray(p, dtype=float)
    return p - np.sum(p * d, axis=-1, keepdims=True) * d


@dataclass(frozen=True)
class Line3:
    """Affine line in R^3 stored in canonical form.

    ``anchor`` is the point closest to the origin and ``dir`` a unit vector
    whose first nonzero coordinate is positive, so two Line3 built from the
    same geometric line compare (and hash) equal up to rounding.
    """

    anchor: tuple
    dir: tuple

    @classmethod
    def through(cls, point, direction) -> "Line3":
        d = canonical_direction(direction)
        a = canonical_anchor(point, d)
        return cls(tuple(float(v) for v in a), tuple(float(v) for v in d))

    @property
    def a(self) -> np.ndarray:
        return np.array(self.anchor)

    @property
    def d(self) -> np.ndarray:
        return np.array(self.dir)

    def at(self, t):
        t = np.asarray(t, dtype=float)
        return self.a + t[..., None] * self.d

    def canonical(self) -> "Line3":
        return Line3.through(self.anchor, self.dir)

    def horizontal_speed(self) -> float:
        return math.hypot(self.dir[0], self.dir[1])


@dataclass(frozen=True)
class Cylinder:
    axis: Line3
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")

    def contains(self, p) -> np.ndarray:
        return cylinder_contains(self, p)


def dist_point_line(p, l: Line3):
    """Euclidean distance from ``p`` (shape ``(..., 3)``) to the line ``l``."""
    w = np.asarray(p, dtype=float) - l.a
    d = l.d
    along = w @ d
    perp = w - along[..., None] * d
    return np.linalg.norm(perp, axis=-1)


def closest_point_on_line(p, l: Line3):
    w = np.asarray(p, dtype=float) - l.a
    return l.a + (w @ l.d)[..., None] * l.d


def cylinder_contains(c: Cylinder, p):
    return dist_point_line(p, c.axis) <= c.radius


# ---------------------------------------------------------------------------
# hexagonal tiling


@njit(cache=True)
def hex_height_scalar(x, y, period):
    """Distance from (x, y) to the boundary of the hexagonal tiling."""
    apo = 0.5 * period
    h = apo * SQRT3  # row spacing of face centers
    beta = y / h
    alpha = (x - apo * beta) / period
    i0 = math.floor(alpha)
    j0 = math.floor(beta)
    best = 1e300
    cx = 0.0
    cy = 0.0
    for di in range(2):
        for dj in range(2):
            px = (i0 + di) * period + (j0 + dj) * apo
            py = (j0 + dj) * h
            r2 = (x - px) ** 2 + (y - py) ** 2
            if r2 < best:
                best = r2
                cx = px
                cy = py
    rx = x - cx
    ry = y - cy
    m = 1e300
    for k in range(6):
        ang = k * math.pi / 3.0
        v = apo - (rx * math.cos(ang) + ry * math.sin(ang))
        if v < m:
            m = v
    return m


class HexTiling:
    """Hexagonal tiling whose face centers form ``period * (Z + Z e^{i pi/3})``.

    Parameters
    ----------
    period : float
        Distance between neighbouring face centers (2000 by default). The
        apothem is ``period / 2`` and the edge length ``period / sqrt(3)``.
    """

    def __init__(self, period: float = DEFAULT_PERIOD):
        if not period > 0:
            raise ValueError("period must be positive")
        self.period = float(period)

    def __repr__(self):
        return f"HexTiling(period={self.period:g})"

    def __eq__(self, other):
        return isinstance(other, HexTiling) and other.period == self.period

    def __hash__(self):
        return hash(("HexTiling", self.period))

    @property
    def apothem(self) -> float:
        return 0.5 * self.period

    @property
    def edge_length(self) -> float:
        return self.period / SQRT3

    @cached_property
    def basis(self) -> np.ndarray:
        return np.array([[self.period, 0.0], [self.apothem, self.apothem * SQRT3]])

    @cached_property
    def neighbor_vectors(self) -> np.ndarray:
        ang = np.arange(6) * np.pi / 3
        return self.period * np.stack([np.cos(ang), np.sin(ang)], axis=1)

    @cached_property
    def central_vertices(self) -> np.ndarray:
        """Vertices of the face containing the origin, counter-clockwise."""
        ang = np.pi / 6 + np.arange(6) * np.pi / 3
        return self.edge_length * np.stack([np.cos(ang), np.sin(ang)], axis=1)

    def nearest_center(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        apo, period = self.apothem, self.period
        h = apo * SQRT3
        beta = x[..., 1] / h
        alpha = (x[..., 0] - apo * beta) / period
        i0 = np.floor(alpha)
        j0 = np.floor(beta)
        best = np.full(x.shape[:-1], np.inf)
        out = np.zeros(x.shape)
        for di in (0, 1):
            for dj in (0, 1):
                px = (i0 + di) * period + (j0 + dj) * apo
                py = (j0 + dj) * h
                r2 = (x[..., 0] - px) ** 2 + (x[..., 1] - py) ** 2
                closer = r2 < best
                best = np.where(closer, r2, best)
                out[..., 0] = np.where(closer, px, out[..., 0])
                out[..., 1] = np.where(closer, py, out[..., 1])
        return out

    def dist_to_boundary(self, x):
        """Exact distance to the tiling boundary.

        Inside the Voronoi cell of its nearest center, the distance is the
        smallest gap to the six perpendicular bisectors.
        """
        x = np.asarray(x, dtype=float)
        r = x - self.nearest_center(x)
        units = self.neighbor_vectors / self.period
        gaps = self.apothem - r @ units.T
        return np.min(gaps, axis=-1)

    def in_central_face(self, x):
        x = np.asarray(x, dtype=float)
        units = self.neighbor_vectors / self.period
        return np.all(x @ units.T <= self.apothem + TOL, axis=-1)

    def dist_to_central_face(self, x):
        """Distance from ``x`` to the closed central hexagon (0 inside)."""
        x = np.asarray(x, dtype=float)
        units = self.neighbor_vectors / self.period
        excess = np.maximum(x @ units.T - self.apothem, 0.0)
        inside = np.all(excess == 0.0, axis=-1)
        # outside a convex polygon the distance is to an edge segment
        v = self.central_vertices
        best = np.full(x.shape[:-1], np.inf)
        for k in range(6):
            a, b = v[k], v[(k + 1) % 6]
            ab = b - a
            t = np.clip(((x - a) @ ab) / (ab @ ab), 0.0, 1.0)
            q = a + t[..., None] * ab
            best = np.minimum(best, np.linalg.norm(x - q, axis=-1))
        return np.where(inside, 0.0, best)

    def sample_central_face(self, n: int, rng) -> np.ndarray:
        """Uniform points in the central hexagon by rejection."""
        out = []
        need = n
        R = self.edge_length
        while need > 0:
            cand = rng.uniform(-R, R, size=(2 * need + 16, 2))
            cand = cand[self.in_central_face(cand)]
            out.append(cand[:need])
            need -= len(out[-1])
        return np.concatenate(out)


DEFAULT_TILING = HexTiling()


class SurfaceH:
    """Graph of the distance to the tiling boundary, as a subset of R^3."""

    def __init__(self, tiling: HexTiling = DEFAULT_TILING):
        self.tiling = tiling

    def __repr__(self):
        return f"SurfaceH({self.tiling!r})"

    @property
    def max_height(self) -> float:
        return self.tiling.apothem

    def height(self, x):
        return self.tiling.dist_to_boundary(x)

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, self.height(x)[..., None]], axis=-1)

    def contains(self, p, tol: float = TOL):
        p = np.asarray(p, dtype=float)
        return np.abs(p[..., 2] - self.height(p[..., :2])) <= tol


DEFAULT_SURFACE = SurfaceH()


def dist_to_hex_boundary(x, tiling: HexTiling = DEFAULT_TILING):
    return tiling.dist_to_boundary(x)


def lift_to_H(x, tiling: HexTiling = DEFAULT_TILING):
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, tiling.dist_to_boundary(x)[..., None]], axis=-1)


def project(p):
    return np.asarray(p, dtype=float)[..., :2]


def map_F(p, tiling: HexTiling = DEFAULT_TILING):
    """Push a point of R^3 vertically onto the surface; fixes the surface."""
    return lift_to_H(project(p), tiling)
