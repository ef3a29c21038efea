"""Multiscale bookkeeping: scales, sphere coverings, secant selection, the p_n / q_n
estimators and the exact arithmetic behind the induction.

Scales follow ``a_n = a0 ** gamma**n`` with ``gamma = 7/6``; they are kept as
mpmath numbers since the exponents grow geometrically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np
from numba import njit
from scipy import stats

from .geometry import DEFAULT_TILING, Cylinder, HexTiling, Line3
from .lines import DiskSlab, LineSample, line_diskslab_distance, sample_poisson
from .surface import DEFAULT_TRACE_H, obstacle_crossing_cells

GAMMA = Fraction(7, 6)
DPS = 50
A0_FULL = 288**6
DESK_A0_MIN = 8000
SLAB = (0.0, 1000.0)

mpmath.mp.dps = DPS


class ScaleOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class ScaleSequence:
    a0: float
    desk_mode: bool = True
    gamma: Fraction = GAMMA

    def __post_init__(self):
        if self.gamma != GAMMA:
            raise ValueError("gamma is fixed at 7/6")
        floor = DESK_A0_MIN if self.desk_mode else A0_FULL
        if self.a0 < floor:
            mode = "desk" if self.desk_mode else "full-scale"
            raise ValueError(f"a0={self.a0} below the {mode} minimum {floor}")

    def exponent(self, n: int) -> Fraction:
        return self.gamma**n

    def ratio_ok(self, n: int) -> bool:
        """Whether a_{n+1} >= 288 a_n (reported in desk mode, guaranteed otherwise)."""
        return scale(self, n + 1) >= 288 * scale(self, n)


def _mp(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    if isinstance(x, int):
        return mpmath.mpf(x)
    return mpmath.mpf(x)


def scale(seq: ScaleSequence, n: int):
    """``a_n`` as an mpmath number (exact rational exponent, 50 digits)."""
    if n < 0:
        raise ValueError("scale index must be non-negative")
    e = seq.exponent(n)
    with mpmath.workdps(DPS):
        return mpmath.power(_mp(seq.a0), _mp(e))


def scale_float(seq: ScaleSequence, n: int) -> float:
    a = scale(seq, n)
    if a > mpmath.mpf(np.finfo(float).max):
        e = seq.exponent(n)
        raise ScaleOverflowError(f"a_{n} = {seq.a0}^({e}) does not fit in a double")
    return float(a)


# ---------------------------------------------------------------------------
# coverings


@dataclass
class CoveringSet:
    n: int
    i: int
    spacing: float
    radius: float  # the sphere radius (i+1) a_n / 6
    reach: float  # a_{n-1}
    points: np.ndarray  # (k, 2)

    def __len__(self):
        return len(self.points)


def _max_vertex_distance(x: np.ndarray, verts: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(x[:, None, :] - verts[None, :, :], axis=2)
    return d.max(axis=1)


def swept_sphere_distance(x, radius: float, tiling: HexTiling | None = DEFAULT_TILING) -> np.ndarray:
    """Distance from ``x`` to the union of the circles of ``radius`` centered in the
    central hexagon (or at 0 when ``tiling`` is None)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if tiling is None:
        r = np.linalg.norm(x, axis=1)
        return np.abs(r - radius)
    near = np.asarray(tiling.dist_to_central_face(x), dtype=float)
    far = _max_vertex_distance(x, tiling.central_vertices)
    return np.maximum(np.maximum(near - radius, radius - far), 0.0)


def build_covering(seq: ScaleSequence, n: int, i: int,
                   tiling: HexTiling | None = DEFAULT_TILING) -> CoveringSet:
    """Lattice points of spacing a_{n-1}/10 whose a_{n-1}-disk meets one of the circles
    of radius (i+1) a_n / 6 centered in the central hexagon."""
    if n < 1:
        raise ValueError("coverings are defined for n >= 1")
    if i not in (1, 2, 3, 4):
        raise ValueError("covering index must be in 1..4")
    a_prev = scale_float(seq, n - 1)
    radius = (i + 1) * scale_float(seq, n) / 6.0
    g = a_prev / 10.0
    hex_r = 0.0 if tiling is None else float(np.linalg.norm(tiling.central_vertices, axis=1).max())
    outer = radius + a_prev + hex_r
    m = int(math.ceil(outer / g))
    ks = np.arange(-m, m + 1)
    X, Y = np.meshgrid(ks * g, ks * g, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    r = np.hypot(pts[:, 0], pts[:, 1])
    pts = pts[(r >= radius - a_prev - hex_r) & (r <= outer)]
    keep = swept_sphere_distance(pts, radius, tiling) <= a_prev
    return CoveringSet(n, i, g, radius, a_prev, pts[keep])


def random_sphere_points(covering: CoveringSet, count: int, rng,
                         tiling: HexTiling | None = DEFAULT_TILING) -> np.ndarray:
    """Points on circles of the covering's radius around uniform centers of the central face."""
    if tiling is None:
        centers = np.zeros((count, 2))
    else:
        centers = tiling.sample_central_face(count, rng)
    ph = rng.uniform(0.0, 2 * math.pi, size=count)
    return centers + covering.radius * np.column_stack([np.cos(ph), np.sin(ph)])


def uncovered(covering: CoveringSet, points) -> np.ndarray:
    """Mask of the points farther than a_{n-1} from every covering center."""
    from scipy.spatial import cKDTree

    d, _ = cKDTree(covering.points).query(np.atleast_2d(points))
    return d > covering.reach


# ---------------------------------------------------------------------------
# secants


def projected_axis_distance(c: Cylinder) -> float:
    """Planar distance from the origin to the projection of the axis."""
    a = np.asarray(c.axis.anchor, dtype=float)
    d = np.asarray(c.axis.dir, dtype=float)
    hs = math.hypot(d[0], d[1])
    if hs < 1e-12:
        return math.hypot(a[0], a[1])
    u = d[:2] / hs
    return abs(a[0] * u[1] - a[1] * u[0])


def excluded_index(d: float, a_n: float) -> int | None:
    """The index i in 1..4 with d in [(2i+1) a_n/12, (2i+3) a_n/12), if any."""
    for i in (1, 2, 3, 4):
        if (2 * i + 1) * a_n / 12.0 <= d < (2 * i + 3) * a_n / 12.0:
            return i
    return None


def select_secant_indices(seq: ScaleSequence, n: int, C1: Cylinder, C2: Cylinder) -> tuple[int, int]:
    a_n = scale_float(seq, n)
    bad = {excluded_index(projected_axis_distance(c), a_n) for c in (C1, C2)}
    free = [i for i in (1, 2, 3, 4) if i not in bad]
    return free[0], free[1]


@njit(cache=True)
def _touched_mask(P, s, z0, z1, ax, ay, az, dx, dy, dz, out):
    hs = math.hypot(dx, dy)
    # t-range where the axis is within 1 of the slab heights
    if abs(dz) > 0.0:
        ta = (z0 - 1.0 - az) / dz
        tb = (z1 + 1.0 - az) / dz
        if ta > tb:
            ta, tb = tb, ta
    else:
        if az < z0 - 1.0 or az > z1 + 1.0:
            return
        ta = -1e300
        tb = 1e300
    for k in range(P.shape[0]):
        if out[k]:
            continue
        px = P[k, 0]
        py = P[k, 1]
        # horizontal distance from the center to the projected axis piece
        if hs > 0.0:
            t = ((px - ax) * dx + (py - ay) * dy) / (hs * hs)
            t = min(max(t, ta), tb)
            hx = ax + t * dx - px
            hy = ay + t * dy - py
        else:
            hx = ax - px
            hy = ay - py
        if hx * hx + hy * hy > (s + 1.0) ** 2:
            continue
        if line_diskslab_distance(ax, ay, az, dx, dy, dz, px, py, s, z0, z1, 1e-9) <= 1.0:
            out[k] = True


def count_touched(covering: CoveringSet, C1: Cylinder, C2: Cylinder) -> int:
    """Covering points whose slab S(x, a_{n-1}/10) x [0, 1000] meets C1 or C2."""
    P = np.ascontiguousarray(covering.points, dtype=float)
    out = np.zeros(len(P), dtype=np.bool_)
    for c in (C1, C2):
        if c.radius != 1.0:
            raise ValueError("count_touched expects unit cylinders")
        a, d = c.axis.anchor, c.axis.dir
        _touched_mask(P, covering.reach / 10.0, SLAB[0], SLAB[1], *a, *d, out)
    return int(out.sum())


def random_cylinder_pairs(seq: ScaleSequence, n: int, count: int, seed: int) -> list:
    """``count`` pairs of i.i.d. cylinders from the line measure restricted to those
    meeting ``S(0, a_n) x [0, 1000]``."""
    from .lines import hits_window, sample_lines_in_ball

    rng = np.random.default_rng(seed)
    w = DiskSlab((0.0, 0.0), scale_float(seq, n), SLAB)
    c, r = w.enclosing
    A, D = [], []
    need = 2 * count
    while sum(len(a) for a in A) < need:
        a, d = sample_lines_in_ball(rng, c, r + 1.0, 4 * need)
        k = hits_window(a, d, w)
        A.append(a[k])
        D.append(d[k])
    A, D = np.vstack(A)[:need], np.vstack(D)[:need]
    cyl = [Cylinder(Line3(tuple(a), tuple(d))) for a, d in zip(A, D)]
    return list(zip(cyl[::2], cyl[1::2]))


def annulus_chord_length(d: float, R: float, eps: float) -> float:
    """Length of each of the two pieces cut from a line at distance d by the annulus
    R(1-eps) <= |x| <= R(1+eps)."""
    if not (0 < eps <= 1.0 / 24.0):
        raise ValueError("eps must lie in (0, 1/24]")
    if R <= 0 or not (0 <= d < R * (1 - eps)):
        raise ValueError("need 0 <= d < R(1-eps)")
    q = (d / R) ** 2
    return R * (math.sqrt((1 + eps) ** 2 - q) - math.sqrt((1 - eps) ** 2 - q))


# ---------------------------------------------------------------------------
# p_n and q_n


@dataclass(frozen=True)
class EstimateWithCI:
    mean: float
    stderr: float
    replicas: int
    seed: int
    hits: int = 0

    def upper(self, level: float = 0.95) -> float:
        """One-sided Clopper-Pearson upper confidence bound."""
        if self.hits >= self.replicas:
            return 1.0
        return float(stats.beta.ppf(level, self.hits + 1, self.replicas - self.hits))

    @classmethod
    def from_hits(cls, hits: int, reps: int, seed: int) -> "EstimateWithCI":
        m = hits / reps
        return cls(m, math.sqrt(m * (1 - m) / reps), reps, seed, hits)


def default_x_points(tiling: HexTiling = DEFAULT_TILING) -> list[tuple[float, float]]:
    pts = [(0.0, 0.0)]
    for k in range(6):
        th = k * math.pi / 3
        pts.append((500.0 * math.cos(th), 500.0 * math.sin(th)))
    return pts


def _replica_seed(seed: int, k: int) -> int:
    from .harness import splitmix64
    return splitmix64(seed, k)


def _window_for(x_points, a: float) -> DiskSlab:
    xs = np.asarray(x_points, dtype=float)
    c = xs.mean(axis=0)
    r = float(np.linalg.norm(xs - c, axis=1).max()) + a
    return DiskSlab(tuple(c), r, SLAB)


def _sample(u: float, w: DiskSlab, seed: int, coupling_u: float | None) -> LineSample:
    if coupling_u is None or u <= 0:
        return sample_poisson(u, w, seed)
    if u > coupling_u:
        raise ValueError("coupling intensity must dominate u")
    # thin a sample at the dominating intensity: nested in u for a fixed seed
    top = sample_poisson(coupling_u, w, seed)
    marks = np.random.default_rng([seed, 1]).random(len(top))
    keep = marks * coupling_u < u
    return LineSample(u, w, top.anchors[keep], top.dirs[keep], seed)


def crossing_probability(seq: ScaleSequence, n: int, u: float, x_points, reps: int, seed: int,
                         extra_lines=None, h: float = DEFAULT_TRACE_H,
                         coupling_u: float | None = None, threads: int = 1) -> EstimateWithCI:
    """Max over ``x_points`` (and over the line pairs in ``extra_lines``, a function of
    x returning lists of pairs) of the MC probability of the crossing event at scale n."""
    a = scale_float(seq, n)
    w = _window_for(x_points, a)
    pairs_of = extra_lines or (lambda x: [()])

    def replica(k):
        s = _sample(u, w, _replica_seed(seed, k), coupling_u)
        row = [obstacle_crossing_cells(s.with_lines(pair), x, a, h)
               for x in x_points for pair in pairs_of(x)]
        return np.array(row, dtype=np.int64)

    from .harness import map_replicas
    rows = map_replicas(replica, reps, threads)
    best = int(np.sum(rows, axis=0).max()) if rows and len(rows[0]) else 0
    return EstimateWithCI.from_hits(best, reps, seed)


def estimate_pn(seq: ScaleSequence, n: int, u: float, x_points=None, reps: int = 100,
                seed: int = 0, h: float = DEFAULT_TRACE_H,
                coupling_u: float | None = None, threads: int = 1) -> EstimateWithCI:
    """Monte Carlo proxy of the worst-case crossing probability at scale n.

    One sample per replica serves all ``x_points``. Pass the same
    ``coupling_u`` to compare several intensities on nested samples.
    """
    x_points = default_x_points() if x_points is None else list(x_points)
    return crossing_probability(seq, n, u, x_points, reps, seed, None, h, coupling_u, threads)


def _horizontal(point2, angle: float, z: float) -> Line3:
    return Line3.through((point2[0], point2[1], z), (math.cos(angle), math.sin(angle), 0.0))


def pair_family(name: str, seq: ScaleSequence, n: int, tiling: HexTiling = DEFAULT_TILING):
    """Deterministic line pairs, as a function of the annulus center x."""
    if name == "edge-hugging":
        verts = tiling.central_vertices

        def pairs(x):
            out = []
            # two consecutive edges of the central face, moved inwards by the offset
            for off in (0.0, 0.5, 1.0):
                pair = []
                for k in (0, 1):
                    v0, v1 = verts[k], verts[(k + 1) % 6]
                    mid = 0.5 * (v0 + v1)
                    inward = -mid / np.linalg.norm(mid)
                    p = mid + off * inward
                    ang = math.atan2(v1[1] - v0[1], v1[0] - v0[0])
                    pair.append(_horizontal(p, ang, 0.5))
                out.append(tuple(pair))
            return out

        return pairs
    if name == "radial":
        def pairs(x):
            return [(_horizontal(x, 0.0, z), _horizontal(x, math.pi / 2, z)) for z in (0.5, 500.0)]

        return pairs
    if name == "tangent":
        a_n = scale_float(seq, n)

        def pairs(x):
            out = []
            for i in (1, 4):
                r = (i + 1) * a_n / 6.0
                l1 = _horizontal((x[0] + r, x[1]), math.pi / 2, 0.5)
                l2 = _horizontal((x[0], x[1] + r), 0.0, 0.5)
                out.append((l1, l2))
            return out

        return pairs
    raise ValueError(f"unknown pair family {name!r}")


PAIR_FAMILIES = ("edge-hugging", "radial", "tangent")


def adversarial_pairs(seq: ScaleSequence, n: int, count: int, seed: int,
                      tiling: HexTiling = DEFAULT_TILING) -> list[tuple[str, tuple, Line3, Line3]]:
    """Randomised members of the three pair families, ``(family, x, l1, l2)``.

    Centers are uniform in the central face; offsets, heights, angles and
    tangency radii are drawn around the deterministic family values.
    """
    rng = np.random.default_rng(seed)
    a_n = scale_float(seq, n)
    verts = tiling.central_vertices
    xs = tiling.sample_central_face(count, rng)
    out = []
    for j in range(count):
        fam = PAIR_FAMILIES[j % 3]
        x = (float(xs[j, 0]), float(xs[j, 1]))
        if fam == "edge-hugging":
            k = int(rng.integers(6))
            off = rng.uniform(0.0, 1.0)
            z = rng.uniform(0.25, 1.0)
            pair = []
            for kk in (k, k + 1):
                v0, v1 = verts[kk % 6], verts[(kk + 1) % 6]
                mid = 0.5 * (v0 + v1)
                p = mid - off * mid / np.linalg.norm(mid)
                pair.append(_horizontal(p, math.atan2(v1[1] - v0[1], v1[0] - v0[0]), z))
        elif fam == "radial":
            th = rng.uniform(0.0, math.pi)
            z = rng.uniform(0.5, 500.0)
            pair = [_horizontal(x, th, z), _horizontal(x, th + rng.uniform(0.1, math.pi - 0.1), z)]
        else:
            z = rng.uniform(0.25, 1.0)
            pair = []
            for _ in range(2):
                r = (int(rng.integers(1, 5)) + 1) * a_n / 6.0
                phi = rng.uniform(0.0, 2 * math.pi)
                foot = (x[0] + r * math.cos(phi), x[1] + r * math.sin(phi))
                pair.append(_horizontal(foot, phi + math.pi / 2, z))
        out.append((fam, x, pair[0], pair[1]))
    return out


def estimate_qn(seq: ScaleSequence, n: int, u: float, pair_family_name: str = "edge-hugging",
                reps: int = 100, seed: int = 0, x_points=None,
                h: float = DEFAULT_TRACE_H, threads: int = 1) -> EstimateWithCI:
    """Like :func:`estimate_pn` with two deterministic lines added; the max over a named
    family is only a lower bound for the worst case over all line pairs."""
    fam = pair_family(pair_family_name, seq, n)
    x_points = default_x_points() if x_points is None else list(x_points)
    return crossing_probability(seq, n, u, x_points, reps, seed, fam, h, threads=threads)


# ---------------------------------------------------------------------------
# exact arithmetic


def recursion_rhs(p_prev, q_prev, seq: ScaleSequence, n: int, c_p=1, c_q=1):
    """Right-hand sides of the p and q recursions with ``a = a_{n-1}``."""
    if n < 1:
        raise ValueError("recursion starts at n = 1")
    with mpmath.workdps(DPS):
        a = scale(seq, n - 1)
        g1 = _mp(GAMMA - 1)
        p, q = _mp(p_prev), _mp(q_prev)
        bracket = p**2 + a ** (6 * -g1) + a ** (2 * -g1) * q**2
        p_b = _mp(c_p) * a ** (2 * g1) * bracket
        q_b = (_mp(c_q) * a ** (2 * g1) * bracket
               + _mp(c_q) * a**g1 * (p * q + a ** (2 * -g1) * q + a ** (6 * -g1))
               + _mp(c_q) * (q**2 + a ** (2 * -g1)))
        return p_b, q_b


def induction_exponents() -> tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]:
    """The two exponent comparisons, as (lhs, rhs) pairs of exact rationals."""
    g = GAMMA
    e1 = (3 * (1 / g - 1) + Fraction(1, 168), Fraction(5, 2) * (1 - g))
    e2 = (2 * (1 / g - 1) + Fraction(1, 168), Fraction(3, 2) * (1 - g))
    return e1, e2


def a0_hat(c_p=1, c_q=1) -> int:
    """Smallest starting scale for which the constants are absorbed."""
    v = max(Fraction(A0_FULL), (8 * Fraction(max(c_p, c_q))) ** 168)
    return int(v) if v.denominator == 1 else v


def check_induction_step(a0_hat_value, c_p=1, c_q=1) -> bool:
    (l1, r1), (l2, r2) = induction_exponents()
    if not (l1 < r1 and l2 < r2):
        return False
    a = Fraction(a0_hat_value)
    if a < A0_FULL:
        return False
    # a^(1/168) >= 8 max(c) without leaving the rationals
    return a >= (8 * Fraction(max(c_p, c_q))) ** 168


def iterate_recursion(seq: ScaleSequence, n_max: int, c_p=1, c_q=1):
    """Iterate the recursion from the threshold values at a0.

    Returns rows ``(n, p_n, q_n, p_threshold, q_threshold)`` in mpmath numbers;
    the contraction holds when every p_n, q_n stays below its threshold.
    """
    g1 = _mp(GAMMA - 1)
    a0 = scale(seq, 0)
    p, q = a0 ** (mpmath.mpf(5) / 2 * -g1), a0 ** (mpmath.mpf(3) / 2 * -g1)
    rows = [(0, p, q, p, q)]
    for n in range(1, n_max + 1):
        p, q = recursion_rhs(p, q, seq, n, c_p, c_q)
        p, q = min(p, mpmath.mpf(1)), min(q, mpmath.mpf(1))
        a = scale(seq, n)
        rows.append((n, p, q, a ** (mpmath.mpf(5) / 2 * -g1), a ** (mpmath.mpf(3) / 2 * -g1)))
    return rows


def tail_bound(a0_hat_value, k0: int):
    """``20 * sum_{k >= k0-1} (a0_hat^(-1/4))^(gamma^k)``, summed until terms fall below 1e-300."""
    if k0 < 1:
        raise ValueError("k0 must be at least 1")
    with mpmath.workdps(DPS):
        a = _mp(a0_hat_value)
        if a <= 1:
            raise ValueError("the tail sum diverges for a0_hat <= 1")
        base = mpmath.log(a) * mpmath.mpf(-1) / 4
        total = mpmath.mpf(0)
        g = _mp(GAMMA)
        k = k0 - 1
        tiny = mpmath.mpf("1e-300")
        while True:
            term = mpmath.exp(base * g**k)
            total += term
            if term < tiny:
                break
            k += 1
        return 20 * total


def smallest_k0(a0_hat_value, target=mpmath.mpf(1) / 3, k_max: int = 10_000) -> int | None:
    for k0 in range(1, k_max + 1):
        if tail_bound(a0_hat_value, k0) < target:
            return k0
    return None
