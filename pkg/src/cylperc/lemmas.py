"""Checkers for the deterministic geometric lemmas: the core segment of two
intersecting cylinders, the two-cylinder tube construction, the horizon of
the hexagonal band, and blocking by two cylinders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import DEFAULT_TILING, Cylinder, HexTiling, Line3, hex_height_scalar, map_F
from .lines import DiskSlab, from_lines
from .surface import DEFAULT_TRACE_H, GridSpec, obstacle_crossing_cells, rasterize_sparse

PARALLEL_EPS = 1e-6
BLOCKING_A0_MIN = 1e5


@dataclass(frozen=True)
class Polyline:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        if len(v) < 2:
            raise ValueError("a polyline needs at least two vertices")
        if np.any(np.linalg.norm(np.diff(v, axis=0), axis=1) == 0):
            raise ValueError("consecutive vertices must be distinct")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def cumlen(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def times(self) -> np.ndarray:
        c = self.cumlen
        return c / c[-1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        ts = self.times()
        out = np.empty(t.shape + (3,))
        for k in range(3):
            out[..., k] = np.interp(t, ts, self.vertices[:, k])
        return out

    def restrict(self, t1: float, t2: float) -> np.ndarray:
        """Vertices of the sub-curve on [t1, t2] (endpoints included)."""
        ts = self.times()
        inner = self.vertices[(ts > t1) & (ts < t2)]
        return np.vstack([self(t1)[None], inner, self(t2)[None]])


@dataclass(frozen=True)
class CoreSegment:
    x1: np.ndarray
    y1: np.ndarray
    x2: np.ndarray
    y2: np.ndarray

    def segment(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        return (self.x1, self.y1) if m == 1 else (self.x2, self.y2)

    def hausdorff_segments(self) -> float:
        return hausdorff_segments((self.x1, self.y1), (self.x2, self.y2))

    def hausdorff_endpoints(self) -> float:
        A = np.array([self.x1, self.y1])
        B = np.array([self.x2, self.y2])
        D = np.linalg.norm(A[:, None] - B[None], axis=2)
        return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    ab = b - a
    L = ab @ ab
    t = 0.0 if L == 0 else min(max(((p - a) @ ab) / L, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def hausdorff_segments(s1, s2) -> float:
    # distance to a segment is convex, so the sup over a segment is at an endpoint
    return max(
        max(point_segment_distance(p, *s2) for p in s1),
        max(point_segment_distance(p, *s1) for p in s2),
    )


# ---------------------------------------------------------------------------
# core segment


@njit(cache=True)
def _min_dist2_disk(cx, cy, cz, e1, e2, a2, d2):
    """Minimum over the unit disk {c + w0 e1 + w1 e2} of the squared distance to the
    line (a2, d2); an exact two-dimensional trust-region problem."""
    # P v = v - (v.d2) d2
    def proj(vx, vy, vz):
        s = vx * d2[0] + vy * d2[1] + vz * d2[2]
        return vx - s * d2[0], vy - s * d2[1], vz - s * d2[2]

    m1 = proj(e1[0], e1[1], e1[2])
    m2 = proj(e2[0], e2[1], e2[2])
    b = proj(cx - a2[0], cy - a2[1], cz - a2[2])
    A11 = m1[0] * m1[0] + m1[1] * m1[1] + m1[2] * m1[2]
    A12 = m1[0] * m2[0] + m1[1] * m2[1] + m1[2] * m2[2]
    A22 = m2[0] * m2[0] + m2[1] * m2[1] + m2[2] * m2[2]
    g1 = m1[0] * b[0] + m1[1] * b[1] + m1[2] * b[2]
    g2 = m2[0] * b[0] + m2[1] * b[1] + m2[2] * b[2]
    bb = b[0] * b[0] + b[1] * b[1] + b[2] * b[2]
    # eigen-decomposition of the 2x2 block
    tr = A11 + A22
    det = A11 * A22 - A12 * A12
    disc = math.sqrt(max(0.25 * tr * tr - det, 0.0))
    lam1 = 0.5 * tr + disc
    lam2 = max(0.5 * tr - disc, 0.0)
    if abs(A12) > 1e-15:
        q1x, q1y = lam1 - A22, A12
    elif A11 >= A22:
        q1x, q1y = 1.0, 0.0
    else:
        q1x, q1y = 0.0, 1.0
    nq = math.hypot(q1x, q1y)
    q1x /= nq
    q1y /= nq
    q2x, q2y = -q1y, q1x
    h1 = q1x * g1 + q1y * g2
    h2 = q2x * g1 + q2y * g2
    # f(w) = w'Aw + 2 g'w + bb; in eigen coordinates f = sum lam_i z_i^2 + 2 h_i z_i + bb
    tiny = 1e-14
    z1 = -h1 / lam1 if lam1 > tiny else 0.0
    z2 = -h2 / lam2 if lam2 > tiny else 0.0
    if z1 * z1 + z2 * z2 <= 1.0:
        return max(lam1 * z1 * z1 + 2 * h1 * z1 + lam2 * z2 * z2 + 2 * h2 * z2 + bb, 0.0)
    # boundary: find mu > 0 with sum h_i^2/(lam_i+mu)^2 = 1
    lo = 0.0
    hi = math.sqrt(h1 * h1 + h2 * h2) + 1.0
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        s = (h1 / (lam1 + mu)) ** 2 + (h2 / (lam2 + mu)) ** 2
        if s > 1.0:
            lo = mu
        else:
            hi = mu
        if hi - lo <= 1e-16 * (1.0 + hi):
            break
    mu = hi
    z1 = -h1 / (lam1 + mu)
    z2 = -h2 / (lam2 + mu)
    n = math.hypot(z1, z2)
    if n > 0:
        z1 /= n
        z2 /= n
    return max(lam1 * z1 * z1 + 2 * h1 * z1 + lam2 * z2 * z2 + 2 * h2 * z2 + bb, 0.0)


@njit(cache=True)
def _feasible(t, a1, d1, e1, e2, a2, d2, r1, r2):
    cx = a1[0] + t * d1[0]
    cy = a1[1] + t * d1[1]
    cz = a1[2] + t * d1[2]
    # scale the disk basis to radius r1
    f1 = e1 * r1
    f2 = e2 * r1
    return _min_dist2_disk(cx, cy, cz, f1, f2, a2, d2) <= r2 * r2 * (1.0 + 1e-12)


@njit(cache=True)
def _extreme(t_in, t_out, a1, d1, e1, e2, a2, d2, r1, r2, tol):
    while abs(t_out - t_in) > tol:
        mid = 0.5 * (t_in + t_out)
        if _feasible(mid, a1, d1, e1, e2, a2, d2, r1, r2):
            t_in = mid
        else:
            t_out = mid
    return t_in


def _frame(d):
    d = np.asarray(d, dtype=float)
    k = np.argmin(np.abs(d))
    e = np.zeros(3)
    e[k] = 1.0
    e1 = np.cross(d, e)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(d, e1)


def _axis_range(C1: Cylinder, C2: Cylinder, t_feas: float, reach: float, tol: float):
    a1, d1 = C1.axis.a, C1.axis.d
    a2, d2 = C2.axis.a, C2.axis.d
    e1, e2 = _frame(d1)
    args = (a1, d1, e1, e2, a2, d2, float(C1.radius), float(C2.radius))
    out = []
    for sgn in (-1.0, 1.0):
        t_out = t_feas + sgn * reach
        while _feasible(t_out, *args):
            t_out = t_feas + 2 * (t_out - t_feas)
        out.append(_extreme(t_feas, t_out, *args, tol))
    return out


def common_perpendicular(l1: Line3, l2: Line3) -> tuple[float, float, float]:
    """Parameters (t1, t2) of the closest points and the line-line distance."""
    a1, d1, a2, d2 = l1.a, l1.d, l2.a, l2.d
    w = a1 - a2
    b = d1 @ d2
    den = 1.0 - b * b
    if den < 1e-30:
        raise ValueError("parallel axes")
    t1 = (b * (d2 @ w) - (d1 @ w)) / den
    t2 = ((d2 @ w) - b * (d1 @ w)) / den
    dist = float(np.linalg.norm(a1 + t1 * d1 - a2 - t2 * d2))
    return float(t1), float(t2), dist


def axes_sine(C1: Cylinder, C2: Cylinder) -> float:
    return float(np.linalg.norm(np.cross(C1.axis.d, C2.axis.d)))


def core_segment(C1: Cylinder, C2: Cylinder, tol: float = 1e-10) -> CoreSegment:
    """Projections of C1 ∩ C2 onto both axes, as endpoint pairs."""
    sin_t = axes_sine(C1, C2)
    if sin_t <= PARALLEL_EPS:
        raise ValueError("axes are parallel")
    t1, t2, dist = common_perpendicular(C1.axis, C2.axis)
    if dist > C1.radius + C2.radius:
        raise ValueError(f"cylinders do not meet (axis distance {dist:.6g})")
    # the point of the common perpendicular splitting it in ratio r1 : r2 lies in both
    p1 = C1.axis.at(t1)
    p2 = C2.axis.at(t2)
    lam = C1.radius / (C1.radius + C2.radius)
    m = p1 + lam * (p2 - p1)
    reach = (C1.radius + C2.radius) / sin_t + C1.radius + C2.radius
    ends = []
    for A, B in ((C1, C2), (C2, C1)):
        tf = float((m - A.axis.a) @ A.axis.d)
        lo, hi = _axis_range(A, B, tf, reach, tol)
        ends.append((A.axis.at(lo), A.axis.at(hi)))
    return CoreSegment(ends[0][0], ends[0][1], ends[1][0], ends[1][1])


# ---------------------------------------------------------------------------
# tube lemma


@dataclass(frozen=True)
class TubeResult:
    line: Line3
    t1: float
    t2: float
    separation: float  # dist(eta(t1), eta(t2))
    max_distance: float  # sup over eta([t1, t2]) of the distance to the line
    case: str


class PreconditionError(ValueError):
    pass


def _dist_to_axis(P, l: Line3) -> np.ndarray:
    w = np.atleast_2d(P) - l.a
    t = w @ l.d
    return np.sqrt(np.maximum(np.einsum("ij,ij->i", w, w) - t * t, 0.0))


def _in_union(P, C1: Cylinder, C2: Cylinder, slack: float = 1e-9) -> np.ndarray:
    return (_dist_to_axis(P, C1.axis) <= C1.radius + slack) | (
        _dist_to_axis(P, C2.axis) <= C2.radius + slack)


def _ball_intervals(eta: Polyline, centers, radius: float) -> list[tuple[float, float]]:
    """Parameter intervals where eta is inside the union of closed balls."""
    V = eta.vertices
    ts = eta.times()
    out = []
    for k in range(len(V) - 1):
        p, q = V[k], V[k + 1]
        dv = q - p
        A = dv @ dv
        for c in centers:
            w = p - c
            B = w @ dv
            Cc = w @ w - radius * radius
            disc = B * B - A * Cc
            if disc < 0:
                continue
            s = math.sqrt(disc)
            lo = max((-B - s) / A, 0.0)
            hi = min((-B + s) / A, 1.0)
            if lo <= hi:
                out.append((ts[k] + lo * (ts[k + 1] - ts[k]), ts[k] + hi * (ts[k + 1] - ts[k])))
    out.sort()
    merged: list[list[float]] = []
    for a, b in out:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


def _farthest_pair(eta: Polyline, lo: float, hi: float) -> tuple[float, float, float]:
    # distances between curve points are maximised at vertices of the sub-curve
    ts = eta.times()
    cand_t = np.concatenate([[lo], ts[(ts > lo) & (ts < hi)], [hi]])
    P = eta(cand_t)
    D = np.linalg.norm(P[:, None] - P[None], axis=2)
    i, j = np.unravel_index(np.argmax(D), D.shape)
    i, j = min(i, j), max(i, j)
    return float(cand_t[i]), float(cand_t[j]), float(D[i, j])


def _check_eta(C1, C2, eta: Polyline, a0: float) -> None:
    V = eta.vertices
    mids = 0.5 * (V[1:] + V[:-1])
    for name, P in (("vertex", V), ("midpoint", mids)):
        bad = np.flatnonzero(~_in_union(P, C1, C2))
        if len(bad):
            raise PreconditionError(f"{name} {bad[0]} at {P[bad[0]]} is outside C1 ∪ C2")
    span = float(np.linalg.norm(V[-1] - V[0]))
    if span < a0 / 10 - 1e-9:
        raise PreconditionError(f"endpoints only {span:.6g} apart, need a0/10 = {a0 / 10:.6g}")


def _finish(eta: Polyline, line: Line3, t1: float, t2: float, case: str) -> TubeResult:
    P = eta.restrict(t1, t2)
    sep = float(np.linalg.norm(eta(t2) - eta(t1)))
    return TubeResult(line, t1, t2, sep, float(_dist_to_axis(P, line).max()), case)


def tube_from_two_cylinders(C1: Cylinder, C2: Cylinder, eta, a0: float) -> TubeResult:
    """A line l and times t1 < t2 with eta([t1, t2]) within distance 4 of l and
    |eta(t2) - eta(t1)| >= a0/100, for a curve eta inside C1 ∪ C2."""
    if not isinstance(eta, Polyline):
        eta = Polyline(eta)
    _check_eta(C1, C2, eta, a0)
    V = eta.vertices
    # cylinders are convex: vertices inside one cylinder keep the whole curve there
    for C in (C1, C2):
        if (_dist_to_axis(V, C.axis) <= C.radius + 1e-9).all():
            return _finish(eta, C.axis, 0.0, 1.0, "single")
    if axes_sine(C1, C2) <= PARALLEL_EPS:
        return _finish(eta, C1.axis, 0.0, 1.0, "parallel")
    _, _, dist = common_perpendicular(C1.axis, C2.axis)
    if dist > C1.radius + C2.radius:
        raise PreconditionError("disjoint cylinders, yet the curve visits both")

    core = core_segment(C1, C2)
    # gaps of the curve outside B(x1, 5) ∪ B(y1, 5); every one avoids the radius-4 balls
    bad = _ball_intervals(eta, (core.x1, core.y1), 5.0)
    gaps = []
    prev = 0.0
    for a, b in bad:
        if a > prev:
            gaps.append((prev, a))
        prev = max(prev, b)
    if prev < 1.0:
        gaps.append((prev, 1.0))
    best = None
    for lo, hi in gaps:
        t1, t2, d = _farthest_pair(eta, lo, hi)
        if best is None or d > best[2]:
            best = (t1, t2, d)
    if best is None:
        raise PreconditionError("curve never leaves the balls around the core segment")
    t1, t2, _ = best
    P = eta.restrict(t1, t2)
    if (_dist_to_axis(P, C1.axis) <= C1.radius + 1e-9).all():
        return _finish(eta, C1.axis, t1, t2, "inside C1")
    if (_dist_to_axis(P, C2.axis) <= C2.radius + 1e-9).all():
        return _finish(eta, C2.axis, t1, t2, "inside C2")
    return _finish(eta, C1.axis, t1, t2, "through core")


def verify_tube(res: TubeResult, a0: float, radius: float = 4.0) -> bool:
    return res.t1 < res.t2 and res.separation >= a0 / 100 and res.max_distance <= radius + 1e-6


# ---------------------------------------------------------------------------
# random instances


def random_intersecting_pair(rng, min_sine: float = 1e-3) -> tuple[Cylinder, Cylinder]:
    while True:
        d1 = rng.normal(size=3)
        d2 = rng.normal(size=3)
        d1 /= np.linalg.norm(d1)
        d2 /= np.linalg.norm(d2)
        n = np.cross(d1, d2)
        s = np.linalg.norm(n)
        if s >= min_sine:
            break
    c = rng.uniform(-50, 50, size=3)
    rho = rng.uniform(0, 2.0)
    a2 = c + rho * n / s + rng.uniform(-30, 30) * d2
    a1 = c + rng.uniform(-30, 30) * d1
    return Cylinder(Line3.through(a1, d1)), Cylinder(Line3.through(a2, d2))


def _point_in_cylinder(rng, C: Cylinder, t: float) -> np.ndarray:
    e1, e2 = _frame(C.axis.d)
    r = C.radius * math.sqrt(rng.uniform())
    ph = rng.uniform(0, 2 * math.pi)
    return C.axis.at(t) + r * (math.cos(ph) * e1 + math.sin(ph) * e2)


def _point_in_both(rng, C1: Cylinder, C2: Cylinder, core: CoreSegment) -> np.ndarray:
    # C1 ∩ C2 is convex and contains the midpoint m of the common perpendicular:
    # shoot from m towards a random point of C1 and stop at a random place inside
    t1, t2, _ = common_perpendicular(C1.axis, C2.axis)
    m = 0.5 * (C1.axis.at(t1) + C2.axis.at(t2))
    ta = float((core.x1 - C1.axis.a) @ C1.axis.d)
    tb = float((core.y1 - C1.axis.a) @ C1.axis.d)
    p = _point_in_cylinder(rng, C1, rng.uniform(min(ta, tb), max(ta, tb)))
    lo, hi = 0.0, 1.0
    if _dist_to_axis(p, C2.axis)[0] > C2.radius:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _dist_to_axis(m + mid * (p - m), C2.axis)[0] <= C2.radius:
                lo = mid
            else:
                hi = mid
        hi = lo
    return m + rng.uniform(0, hi) * (p - m)


def random_tube_instance(rng, a0: float = 1000.0, legs: int = 6):
    """Two intersecting cylinders and a polyline in their union that hops between
    them through the intersection; its endpoints are at least a0/10 apart."""
    while True:
        C1, C2 = random_intersecting_pair(rng)
        core = core_segment(C1, C2)
        cyl = [C1, C2]
        m = int(rng.integers(0, 2))
        pts = [_point_in_cylinder(rng, cyl[m], rng.uniform(-a0 / 5, a0 / 5))]
        for _ in range(legs):
            # wander inside the current cylinder, then cross over through C1 ∩ C2
            for _ in range(int(rng.integers(0, 3))):
                pts.append(_point_in_cylinder(rng, cyl[m], rng.uniform(-a0 / 5, a0 / 5)))
            pts.append(_point_in_both(rng, C1, C2, core))
            m = 1 - m
        pts.append(_point_in_cylinder(rng, cyl[m], rng.choice([-1, 1]) * rng.uniform(a0 / 8, a0 / 4)))
        V = np.array(pts)
        keep = np.concatenate([[True], np.linalg.norm(np.diff(V, axis=0), axis=1) > 0])
        V = V[keep]
        if len(V) >= 2 and np.linalg.norm(V[-1] - V[0]) >= a0 / 10:
            return C1, C2, Polyline(V)


# ---------------------------------------------------------------------------
# horizon


@njit(cache=True)
def _argmax_concave(px, py, ux, uy, a, b, period):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - g * (b - a)
    e = a + g * (b - a)
    fc = hex_height_scalar(px + c * ux, py + c * uy, period)
    fe = hex_height_scalar(px + e * ux, py + e * uy, period)
    while b - a > 1e-6:
        if fc >= fe:
            b = e
            e = c
            fe = fc
            c = b - g * (b - a)
            fc = hex_height_scalar(px + c * ux, py + c * uy, period)
        else:
            a = c
            c = e
            fc = fe
            e = a + g * (b - a)
            fe = hex_height_scalar(px + e * ux, py + e * uy, period)
    return 0.5 * (a + b)


@njit(cache=True)
def _free_runs_max(px, py, ux, uy, padding, cap, period):
    """Longest run of the segment p + s u, |s| <= cap/2, inside {dist_to_boundary <= padding}.

    Runs cut by the scan ends count with their visible length; a run covering
    the whole scanned segment is reported as inf.
    """
    half = 0.5 * cap
    s = -half
    best = 0.0
    inside_prev = hex_height_scalar(px + s * ux, py + s * uy, period) <= padding
    run_start = s
    whole = inside_prev
    while s < half:
        d = hex_height_scalar(px + s * ux, py + s * uy, period)
        step = max(abs(d - padding), 1.0)
        s_next = min(s + step, half)
        inside_next = hex_height_scalar(px + s_next * ux, py + s_next * uy, period) <= padding
        if inside_prev and inside_next and s_next - s > padding - d:
            # the step left the Lipschitz-safe zone; the distance is concave inside a
            # face, so a hidden excursion shows up as an interior maximum
            sm = _argmax_concave(px, py, ux, uy, s, s_next, period)
            if hex_height_scalar(px + sm * ux, py + sm * uy, period) > padding:
                whole = False
                lo = s
                hi = sm
                while hi - lo > 1e-3:
                    mid = 0.5 * (lo + hi)
                    if hex_height_scalar(px + mid * ux, py + mid * uy, period) <= padding:
                        lo = mid
                    else:
                        hi = mid
                best = max(best, 0.5 * (lo + hi) - run_start)
                lo = sm
                hi = s_next
                while hi - lo > 1e-3:
                    mid = 0.5 * (lo + hi)
                    if hex_height_scalar(px + mid * ux, py + mid * uy, period) > padding:
                        lo = mid
                    else:
                        hi = mid
                run_start = 0.5 * (lo + hi)
        if inside_next != inside_prev:
            whole = False
            lo = s
            hi = s_next
            while hi - lo > 1e-3:
                mid = 0.5 * (lo + hi)
                if (hex_height_scalar(px + mid * ux, py + mid * uy, period) <= padding) == inside_prev:
                    lo = mid
                else:
                    hi = mid
            edge = 0.5 * (lo + hi)
            if inside_prev:
                best = max(best, edge - run_start)
            else:
                run_start = edge
            inside_prev = inside_next
        s = s_next
    if whole:
        return np.inf
    if inside_prev:
        best = max(best, half - run_start)
    return best


@njit(cache=True)
def _horizon_kernel(thetas, starts, padding, cap, period):
    best = 0.0
    arg_t = 0
    arg_s = 0
    for i in range(thetas.shape[0]):
        ux = math.cos(thetas[i])
        uy = math.sin(thetas[i])
        for j in range(starts.shape[0]):
            v = _free_runs_max(starts[j, 0], starts[j, 1], ux, uy, padding, cap, period)
            if v > best:
                best = v
                arg_t = i
                arg_s = j
                if v == np.inf:
                    return best, arg_t, arg_s
    return best, arg_t, arg_s


@dataclass(frozen=True)
class HorizonResult:
    max_length: float
    theta: float
    start: tuple

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.max_length)


def offset_grid(offsets: int, tiling: HexTiling = DEFAULT_TILING) -> np.ndarray:
    """About ``offsets`` points on a regular grid of the fundamental rhombus."""
    k = max(1, int(round(math.sqrt(offsets))))
    f = (np.arange(k) + 0.0) / k
    A, B = np.meshgrid(f, f, indexing="ij")
    return np.column_stack([A.ravel(), B.ravel()]) @ tiling.basis


def horizon_scan(padding: float = 20.0, directions: int = 720, offsets: int = 400,
                 cap: float = 2e4, tiling: HexTiling = DEFAULT_TILING) -> HorizonResult:
    """Longest straight segment inside the padding-neighbourhood of the tiling boundary.

    Lines through a grid of starting points are scanned over length ``cap``;
    a run reaching the scan ends is reported as unbounded (inf).
    """
    if directions < 360 or offsets < 100:
        raise ValueError("need at least 360 directions and 100 offsets")
    thetas = np.arange(directions) * (math.pi / directions)
    starts = offset_grid(offsets, tiling)
    best, i, j = _horizon_kernel(thetas, starts, float(padding), float(cap), tiling.period)
    return HorizonResult(float(best), float(thetas[i]), tuple(starts[j]))


def free_runs_exact(p, theta: float, padding: float, cap: float = 2e4,
                    tiling: HexTiling = DEFAULT_TILING) -> float:
    """Independent oracle: the complement of the band is a union of shrunken hexagons,
    so the runs are the gaps between the line's chords through those convex polygons."""
    p = np.asarray(p, dtype=float)
    u = np.array([math.cos(theta), math.sin(theta)])
    half = 0.5 * cap
    inner = tiling.apothem - padding
    chords = []
    if inner > 0:
        # faces whose center is within reach of the scanned segment
        reach = half + tiling.edge_length
        n = int(math.ceil(reach / tiling.period)) + 2
        c0 = tiling.nearest_center(p)
        normals = tiling.neighbor_vectors / tiling.period
        for i in range(-2 * n, 2 * n + 1):
            for j in range(-2 * n, 2 * n + 1):
                c = c0 + i * tiling.basis[0] + j * tiling.basis[1]
                w = c - p
                along = w @ u
                if abs(w[0] * u[1] - w[1] * u[0]) > tiling.edge_length or abs(along) > reach:
                    continue
                lo, hi = -np.inf, np.inf
                empty = False
                for nv in normals:
                    # (p + s u - c) . nv < inner
                    a = u @ nv
                    b = inner - (p - c) @ nv
                    if abs(a) < 1e-15:
                        if b <= 0:
                            empty = True
                            break
                    elif a > 0:
                        hi = min(hi, b / a)
                    else:
                        lo = max(lo, b / a)
                if not empty and lo < hi:
                    chords.append((lo, hi))
    chords = sorted((max(a, -half), min(b, half)) for a, b in chords if b > -half and a < half)
    if not chords:
        return np.inf
    best = 0.0
    cur = -half
    for a, b in chords:
        if a > cur:
            best = max(best, a - cur)
        cur = max(cur, b)
    return max(best, half - cur)


# ---------------------------------------------------------------------------
# blocking by two cylinders


def blocking_check(C1: Cylinder, C2: Cylinder, x0=(0.0, 0.0), a0: float = 1e5,
                   h: float = DEFAULT_TRACE_H, tiling: HexTiling = DEFAULT_TILING) -> bool:
    """True iff the two cylinders alone do not join S(x0, a0/10) to the circle of radius a0."""
    if a0 < BLOCKING_A0_MIN:
        raise ValueError(f"blocking_check needs a0 >= {BLOCKING_A0_MIN:g}")
    w = DiskSlab(tuple(x0), a0, (0.0, tiling.apothem))
    s = from_lines([C1.axis, C2.axis], w)
    return not obstacle_crossing_cells(s, x0, a0, h, tiling)


def slab_check(C: Cylinder, x0, a0: float, h: float = DEFAULT_TRACE_H, bound: float = 10.0,
               tiling: HexTiling = DEFAULT_TILING) -> float:
    """Largest |F(q) - q| over axis points q nearest to the cylinder's trace on H.

    Returns the maximum (0 for an empty trace); it should not exceed ``bound``.
    """
    grid = GridSpec.around(x0, a0, h)
    rows = rasterize_sparse([C.axis], grid, x0, a0, "H", tiling=tiling)
    if len(rows) == 0:
        return 0.0
    xy = grid.centers(rows[:, 1:])
    P = np.column_stack([xy, tiling.dist_to_boundary(xy)])
    t = (P - C.axis.a) @ C.axis.d
    Q = C.axis.a + t[:, None] * C.axis.d
    return float(np.linalg.norm(map_F(Q, tiling) - Q, axis=1).max())


# ---------------------------------------------------------------------------
# corpus files


def format_instance(C1: Cylinder, C2: Cylinder, eta: Polyline) -> str:
    vals = [*C1.axis.anchor, *C1.axis.dir, C1.radius, *C2.axis.anchor, *C2.axis.dir, C2.radius,
            len(eta.vertices), *eta.vertices.ravel()]
    return " ".join(repr(float(v)) if not isinstance(v, int) else str(v) for v in vals)


def parse_instance(line: str) -> tuple[Cylinder, Cylinder, Polyline]:
    f = line.split()
    nums = [float(x) for x in f[:14]]
    k = int(f[14])
    V = np.array([float(x) for x in f[15:15 + 3 * k]]).reshape(k, 3)
    C1 = Cylinder(Line3(tuple(nums[0:3]), tuple(nums[3:6])), nums[6])
    C2 = Cylinder(Line3(tuple(nums[7:10]), tuple(nums[10:13])), nums[13])
    return C1, C2, Polyline(V)


def write_corpus(path, instances) -> None:
    with open(path, "w") as f:
        for C1, C2, eta in instances:
            f.write(format_instance(C1, C2, eta) + "\n")


def read_corpus(path) -> list:
    with open(path) as f:
        return [parse_instance(l) for l in f if l.strip() and not l.lstrip().startswith("#")]


def run_tube_corpus(path_in, path_out, a0: float) -> tuple[int, int]:
    """Check every instance; writes each input line followed by PASS/FAIL and witnesses."""
    passed = failed = 0
    with open(path_in) as fin, open(path_out, "w") as fout:
        for line in fin:
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            C1, C2, eta = parse_instance(line)
            res = tube_from_two_cylinders(C1, C2, eta, a0)
            ok = verify_tube(res, a0)
            passed += ok
            failed += not ok
            fout.write(f"{line.rstrip()} {'PASS' if ok else 'FAIL'} {res.t1!r} {res.t2!r} "
                       f"{res.separation!r} {res.max_distance!r}\n")
    return passed, failed
