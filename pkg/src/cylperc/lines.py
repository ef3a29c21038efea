"""Poisson processes of lines in R^3 and the invariant line measure.

The measure is normalised so that lines hitting a ball of radius ``r`` have
mass ``pi r^2``: directions are uniform on the sphere (total mass one) and,
given a direction, the line's offset in the orthogonal plane carries Lebesgue
measure. The unit cylinder around a line meets a set ``A`` iff the line passes
within distance 1 of ``A``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .geometry import TOL, Line3, canonical_anchor, canonical_direction

MIN_ESTIMATE_SAMPLES = 1000


class EstimateOnlyError(ValueError):
    """Raised when a closed form is requested for a window that has none."""


class CoverageError(ValueError):
    """The sample's window does not contain every cylinder the query needs."""


# ---------------------------------------------------------------------------
# windows


@dataclass(frozen=True)
class Ball:
    center: tuple
    r: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("ball radius must be non-negative")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    @property
    def enclosing(self) -> tuple[np.ndarray, float]:
        return np.array(self.center), float(self.r)


@dataclass(frozen=True)
class DiskSlab:
    """``S(center2, s) x [z0, z1]``, a vertical solid cylinder."""

    center2: tuple
    s: float
    height: tuple = (0.0, 1000.0)

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("disk radius must be positive")
        if not self.height[1] >= self.height[0]:
            raise ValueError("empty height interval")
        object.__setattr__(self, "center2", tuple(float(v) for v in self.center2))
        object.__setattr__(self, "height", tuple(float(v) for v in self.height))

    @property
    def enclosing(self) -> tuple[np.ndarray, float]:
        z0, z1 = self.height
        c = np.array([self.center2[0], self.center2[1], 0.5 * (z0 + z1)])
        return c, math.hypot(self.s, 0.5 * (z1 - z0))


Window = Ball | DiskSlab


def point_window(p) -> Ball:
    return Ball(tuple(p), 0.0)


def _extent(w: Window):
    """Window as (center2, horizontal radius, z0, z1, is_ball)."""
    if isinstance(w, Ball):
        c = w.center
        return (c[0], c[1]), w.r, c[2] - w.r, c[2] + w.r, True
    return w.center2, w.s, w.height[0], w.height[1], False


def covers(outer: Window, inner: Window) -> bool:
    """True if ``inner`` is contained in ``outer``.

    Every line whose cylinder meets ``outer`` is sampled, so containment is
    enough for the sample to be complete on ``inner``.
    """
    (ox, oy), orad, oz0, oz1, oball = _extent(outer)
    (ix, iy), irad, iz0, iz1, iball = _extent(inner)
    dxy = math.hypot(ox - ix, oy - iy)
    if oball:
        cz = outer.center[2]
        if iball:
            dz = inner.center[2] - cz
            return math.hypot(dxy, dz) + irad <= orad + TOL
        far_z = max(abs(iz0 - cz), abs(iz1 - cz))
        return math.hypot(dxy + irad, far_z) <= orad + TOL
    return dxy + irad <= orad + TOL and iz0 >= oz0 - TOL and iz1 <= oz1 + TOL


# ---------------------------------------------------------------------------
# measure


def mu_lines_hitting_ball(r: float) -> float:
    """Measure of the lines meeting a ball of radius ``r``."""
    if r < 0:
        raise ValueError(f"negative radius {r}")
    return math.pi * r * r


def mu_cylinders_hitting(w: Window) -> float:
    """Measure of the lines whose unit cylinder meets ``w``."""
    if isinstance(w, Ball):
        return mu_lines_hitting_ball(w.r + 1.0)
    raise EstimateOnlyError(
        f"no closed form for {type(w).__name__}; use estimate_mu_hitting_both"
    )


# ---------------------------------------------------------------------------
# sampling


def _orthonormal_frame(d):
    helper = np.zeros_like(d)
    use_x = np.abs(d[:, 0]) < 0.9
    helper[use_x, 0] = 1.0
    helper[~use_x, 1] = 1.0
    e1 = helper - np.sum(helper * d, axis=1, keepdims=True) * d
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(d, e1)
    return e1, e2


def sample_lines_in_ball(rng: np.random.Generator, center, R: float, n: int):
    """``n`` i.i.d. lines from the line measure restricted to lines within ``R`` of ``center``."""
    center = np.asarray(center, dtype=float)
    g = rng.standard_normal((n, 3))
    # a zero draw has probability zero; guard anyway
    g[np.all(g == 0, axis=1)] = (0.0, 0.0, 1.0)
    d = canonical_direction(g)
    rho = R * np.sqrt(rng.random(n))
    phi = 2.0 * np.pi * rng.random(n)
    e1, e2 = _orthonormal_frame(d)
    p = center + rho[:, None] * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
    return canonical_anchor(p, d), d


@dataclass(frozen=True)
class LineSample:
    """One realisation of the Poisson line process restricted to a window.

    Lines are stored as two read-only ``(N, 3)`` arrays of canonical anchors
    and directions.
    """

    u: float
    window: Window
    anchors: np.ndarray = field(repr=False)
    dirs: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        a = np.array(self.anchors, dtype=float).reshape(-1, 3)
        d = np.array(self.dirs, dtype=float).reshape(-1, 3)
        a.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "anchors", a)
        object.__setattr__(self, "dirs", d)

    def __len__(self):
        return len(self.anchors)

    @property
    def lines(self) -> list[Line3]:
        return [Line3(tuple(a), tuple(d)) for a, d in zip(self.anchors, self.dirs)]

    @property
    def coverage(self) -> tuple[np.ndarray, float]:
        return self.window.enclosing

    def with_lines(self, extra) -> "LineSample":
        """``omega + sum of deltas``: the same sample with deterministic lines added."""
        extra = list(extra)
        if not extra:
            return self
        a = np.array([l.anchor for l in extra])
        d = np.array([l.dir for l in extra])
        return LineSample(
            self.u, self.window, np.vstack([self.anchors, a]), np.vstack([self.dirs, d]), self.seed
        )

    def merge(self, other: "LineSample") -> "LineSample":
        if other.window != self.window:
            raise ValueError("can only superpose samples on the same window")
        return LineSample(
            self.u + other.u,
            self.window,
            np.vstack([self.anchors, other.anchors]),
            np.vstack([self.dirs, other.dirs]),
            None,
        )

    def restrict(self, w: Window) -> "LineSample":
        """Lines whose unit cylinder meets ``w`` (the Poisson restriction)."""
        if not covers(self.window, w):
            raise CoverageError(f"{w} is not covered by {self.window}")
        keep = hits_window(self.anchors, self.dirs, w)
        return LineSample(self.u, w, self.anchors[keep], self.dirs[keep], self.seed)


def from_lines(lines, window: Window) -> LineSample:
    """A deterministic configuration (no Poisson randomness)."""
    lines = list(lines)
    a = np.array([l.anchor for l in lines]).reshape(-1, 3)
    d = np.array([l.dir for l in lines]).reshape(-1, 3)
    return LineSample(0.0, window, a, d, None)


def sample_poisson(u: float, w: Window, seed: int) -> LineSample:
    """Poisson line process of intensity ``u * mu`` restricted to ``w``.

    All lines within ``r + 1`` of the center of the enclosing ball of ``w``
    are drawn, so every unit cylinder meeting ``w`` is present.
    """
    if u < 0:
        raise ValueError(f"intensity must be non-negative, got {u}")
    rng = np.random.default_rng(seed)
    c, r = w.enclosing
    n = rng.poisson(u * mu_lines_hitting_ball(r + 1.0)) if u > 0 else 0
    a, d = sample_lines_in_ball(rng, c, r + 1.0, int(n))
    return LineSample(float(u), w, a, d, seed)


# ---------------------------------------------------------------------------
# hitting


@njit(cache=True)
def _diskslab_dist(px, py, pz, cx, cy, s, z0, z1):
    rho = math.hypot(px - cx, py - cy)
    dr = rho - s if rho > s else 0.0
    dz = 0.0
    if pz < z0:
        dz = z0 - pz
    elif pz > z1:
        dz = pz - z1
    return math.hypot(dr, dz)


@njit(cache=True)
def line_diskslab_distance(ax, ay, az, dx, dy, dz, cx, cy, s, z0, z1, tol):
    """Minimum over t of the distance from ``a + t d`` to the disk slab.

    The distance is convex in t; golden-section search on a bracket that
    contains every t where the distance is below 2.
    """
    zc = 0.5 * (z0 + z1)
    R = math.sqrt(s * s + 0.25 * (z1 - z0) ** 2)
    tc = (cx - ax) * dx + (cy - ay) * dy + (zc - az) * dz
    lo = tc - R - 3.0
    hi = tc + R + 3.0
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - g * (hi - lo)
    e = lo + g * (hi - lo)
    fc = _diskslab_dist(ax + c * dx, ay + c * dy, az + c * dz, cx, cy, s, z0, z1)
    fe = _diskslab_dist(ax + e * dx, ay + e * dy, az + e * dz, cx, cy, s, z0, z1)
    # below a few ulps of |t| the bracket can no longer shrink
    tol = max(tol, 8e-16 * (abs(lo) + abs(hi)))
    for _ in range(400):
        if hi - lo <= tol:
            break
        if fc <= fe:
            hi = e
            e = c
            fe = fc
            c = hi - g * (hi - lo)
            fc = _diskslab_dist(ax + c * dx, ay + c * dy, az + c * dz, cx, cy, s, z0, z1)
        else:
            lo = c
            c = e
            fc = fe
            e = lo + g * (hi - lo)
            fe = _diskslab_dist(ax + e * dx, ay + e * dy, az + e * dz, cx, cy, s, z0, z1)
        if fc == 0.0 or fe == 0.0:
            return 0.0
    return min(fc, fe)


@njit(cache=True)
def _batch_diskslab_distance(A, D, cx, cy, s, z0, z1, tol):
    n = A.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = line_diskslab_distance(
            A[i, 0], A[i, 1], A[i, 2], D[i, 0], D[i, 1], D[i, 2], cx, cy, s, z0, z1, tol
        )
    return out


def line_window_distance(anchors, dirs, w: Window, tol: float = 1e-9):
    """Distance from each line to the window (exact below 2 for disk slabs)."""
    A = np.asarray(anchors, dtype=float).reshape(-1, 3)
    D = np.asarray(dirs, dtype=float).reshape(-1, 3)
    if isinstance(w, Ball):
        wv = np.asarray(w.center) - A
        perp = wv - np.sum(wv * D, axis=1, keepdims=True) * D
        return np.maximum(np.linalg.norm(perp, axis=1) - w.r, 0.0)
    cx, cy = w.center2
    z0, z1 = w.height
    return _batch_diskslab_distance(A, D, cx, cy, w.s, z0, z1, tol)


def hits_window(anchors, dirs, w: Window):
    return line_window_distance(anchors, dirs, w) <= 1.0


def hits_region(l: Line3, w: Window) -> bool:
    """Does the unit cylinder around ``l`` meet ``w``?"""
    return bool(hits_window(np.array([l.anchor]), np.array([l.dir]), w)[0])


def count_hitting_both(s: LineSample, w1: Window, w2: Window) -> int:
    for w in (w1, w2):
        if not covers(s.window, w):
            raise CoverageError(f"{w} is not covered by the sample window {s.window}")
    if len(s) == 0:
        return 0
    both = hits_window(s.anchors, s.dirs, w1) & hits_window(s.anchors, s.dirs, w2)
    return int(np.count_nonzero(both))


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int = 0


def estimate_mu_hitting_both(w1: Window, w2: Window, n: int, seed: int) -> Estimate:
    """Monte Carlo estimate of the measure of lines whose cylinder meets both windows.

    Lines are drawn uniformly from those within 1 of the enclosing ball of the
    smaller window; every line of interest is among them.
    """
    if n < MIN_ESTIMATE_SAMPLES:
        raise ValueError(f"need at least {MIN_ESTIMATE_SAMPLES} samples, got {n}")
    if w2.enclosing[1] < w1.enclosing[1]:
        w1, w2 = w2, w1
    c, r = w1.enclosing
    total = mu_lines_hitting_ball(r + 1.0)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    chunk = 1 << 20
    while done < n:
        m = min(chunk, n - done)
        a, d = sample_lines_in_ball(rng, c, r + 1.0, m)
        ok = hits_window(a, d, w1)
        ok[ok] = hits_window(a[ok], d[ok], w2)
        hits += int(np.count_nonzero(ok))
        done += m
    frac = hits / n
    return Estimate(total * frac, total * math.sqrt(frac * (1.0 - frac) / n), n)


def mu_two_points(r: float) -> float:
    """Measure of lines passing within 1 of two points at distance ``r``.

    Quadrature over the angle between the line and the segment joining the
    points: given the direction, the admissible offsets form the lens where
    two unit disks at distance ``r sin(theta)`` overlap.
    """
    from scipy.integrate import quad

    def lens(dd):
        if dd >= 2.0:
            return 0.0
        return 2.0 * math.acos(dd / 2.0) - 0.5 * dd * math.sqrt(4.0 - dd * dd)

    if r == 0:
        return math.pi
    # lens vanishes once r*sqrt(1-c^2) >= 2, i.e. c <= c_min
    c_min = math.sqrt(max(0.0, 1.0 - (2.0 / r) ** 2)) if r > 2 else 0.0
    val, _ = quad(lambda c: lens(r * math.sqrt(max(0.0, 1.0 - c * c))), c_min, 1.0,
                  epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


# ---------------------------------------------------------------------------
# vacancy


def point_vacant(s: LineSample, p) -> bool:
    p = np.asarray(p, dtype=float)
    c, r = s.coverage
    if np.linalg.norm(p - c) > r + TOL:
        raise CoverageError(f"point {p} outside the sample window")
    if len(s) == 0:
        return True
    w = p - s.anchors
    perp = w - np.sum(w * s.dirs, axis=1, keepdims=True) * s.dirs
    return bool(np.all(np.einsum("ij,ij->i", perp, perp) > 1.0))


def _vacancy_batch(rng, u, points, reps):
    """Vacancy indicators of ``points`` over ``reps`` independent realisations.

    Each realisation is the process restricted to the ball enclosing the points.
    """
    points = np.asarray(points, dtype=float)
    c = points.mean(axis=0)
    r = float(np.max(np.linalg.norm(points - c, axis=1)))
    mu = mu_lines_hitting_ball(r + 1.0)
    counts = rng.poisson(u * mu, size=reps)
    total = int(counts.sum())
    a, d = sample_lines_in_ball(rng, c, r + 1.0, total)
    owner = np.repeat(np.arange(reps), counts)
    out = np.ones((reps, len(points)), dtype=bool)
    for k, p in enumerate(points):
        w = p - a
        along = np.sum(w * d, axis=1)
        dist2 = np.sum(w * w, axis=1) - along * along
        covered = owner[dist2 <= 1.0]
        out[covered, k] = False
    return out


def _pair_vacancy(rng, u, x, y, reps):
    """Vacancy indicators of two points over ``reps`` realisations.

    Lines meeting B(x,1) and lines meeting B(y,1) but not B(x,1) form two
    independent Poisson processes, so only those are drawn.
    """
    out = np.ones((reps, 2), dtype=bool)
    lam = u * mu_lines_hitting_ball(1.0)
    for k, (p, other) in enumerate(((x, None), (y, x))):
        counts = rng.poisson(lam, size=reps)
        a, d = sample_lines_in_ball(rng, p, 1.0, int(counts.sum()))
        owner = np.repeat(np.arange(reps), counts)
        if other is not None:
            w = other - a
            t = np.sum(w * d, axis=1)
            keep = np.sum(w * w, axis=1) - t * t > 1.0
            a, d, owner = a[keep], d[keep], owner[keep]
        for j, q in enumerate((x, y)):
            w = q - a
            t = np.sum(w * d, axis=1)
            out[owner[np.sum(w * w, axis=1) - t * t <= 1.0], j] = False
    return out


@dataclass(frozen=True)
class CovarianceEstimate:
    mc: float
    mc_stderr: float
    semi_analytic: float
    semi_stderr: float
    reps: int


def covariance_estimate(x, y, u: float, reps: int, seed: int,
                        mu_samples: int = 2_000_000) -> CovarianceEstimate:
    """Covariance of the vacancy indicators at ``x`` and ``y``.

    Returns both the empirical covariance over ``reps`` realisations and the
    value ``exp(-2 u pi) (exp(u mu(L_{x,y})) - 1)`` with the measure estimated
    by Monte Carlo.
    """
    if reps < 10_000:
        raise ValueError("covariance estimation needs at least 1e4 replicas")
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ind = _pair_vacancy(rng, u, x, y, reps).astype(float)
    X, Y = ind[:, 0], ind[:, 1]
    prod = (X - X.mean()) * (Y - Y.mean())
    cov = float(prod.sum() / (reps - 1))
    cov_se = float(prod.std(ddof=1) / math.sqrt(reps))

    est = estimate_mu_hitting_both(point_window(x), point_window(y), mu_samples,
                                   int(rng.integers(2**63)))
    base = math.exp(-2.0 * u * math.pi)
    semi = base * (math.exp(u * est.value) - 1.0)
    semi_se = base * u * math.exp(u * est.value) * est.stderr
    return CovarianceEstimate(cov, cov_se, semi, semi_se, reps)
