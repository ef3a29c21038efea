import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cylperc.geometry import DEFAULT_TILING, Cylinder, Line3
from cylperc.lemmas import (PreconditionError, Polyline, _free_runs_max, _frame, blocking_check,
                            common_perpendicular, core_segment, free_runs_exact,
                            hausdorff_segments, horizon_scan, offset_grid, random_intersecting_pair,
                            random_tube_instance, read_corpus, run_tube_corpus, slab_check,
                            tube_from_two_cylinders, verify_tube, write_corpus)

T = DEFAULT_TILING


def cyl(p, d):
    return Cylinder(Line3.through(p, d))


def disk_hits(C1, t, C2, n=400000, seed=0):
    """Does the disk of C1 at axis parameter t meet C2 (dense sampling)?"""
    rng = np.random.default_rng(seed)
    e1, e2 = _frame(C1.axis.d)
    r = np.sqrt(rng.random(n))
    ph = rng.uniform(0, 2 * np.pi, n)
    P = C1.axis.at(t) + r[:, None] * (np.cos(ph)[:, None] * e1 + np.sin(ph)[:, None] * e2)
    w = P - C2.axis.a
    along = w @ C2.axis.d
    return bool(np.any(np.einsum("ij,ij->i", w, w) - along**2 <= 1.0))


def test_perpendicular_axes_core_is_unit_interval():
    C1 = cyl((0, 0, 0), (1, 0, 0))
    C2 = cyl((0, 0, 0), (0, 1, 0))
    cs = core_segment(C1, C2)
    assert sorted([cs.x1[0], cs.y1[0]]) == pytest.approx([-1, 1], abs=1e-9)
    assert sorted([cs.x2[1], cs.y2[1]]) == pytest.approx([-1, 1], abs=1e-9)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_core_endpoints_by_dense_disk_sampling(seed):
    rng = np.random.default_rng(seed)
    C1, C2 = random_intersecting_pair(rng, min_sine=0.3)
    cs = core_segment(C1, C2)
    ts = sorted(float((p - C1.axis.a) @ C1.axis.d) for p in (cs.x1, cs.y1))
    lo, hi = ts
    assert disk_hits(C1, lo + 1e-3, C2) and disk_hits(C1, hi - 1e-3, C2)
    assert not disk_hits(C1, lo - 1e-3, C2) and not disk_hits(C1, hi + 1e-3, C2)


def test_core_stable_under_tolerance():
    rng = np.random.default_rng(4)
    for _ in range(20):
        C1, C2 = random_intersecting_pair(rng)
        a = core_segment(C1, C2, tol=1e-7)
        b = core_segment(C1, C2, tol=1e-8)
        for u, v in ((a.x1, b.x1), (a.y1, b.y1), (a.x2, b.x2), (a.y2, b.y2)):
            assert np.linalg.norm(u - v) < 1e-5


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=300)
def test_hausdorff_bounds(seed):
    C1, C2 = random_intersecting_pair(np.random.default_rng(seed))
    cs = core_segment(C1, C2)
    assert cs.hausdorff_segments() <= 2.0
    assert cs.hausdorff_endpoints() <= 2 * math.sqrt(2) + 1e-6


def test_core_errors():
    C1 = cyl((0, 0, 0), (1, 0, 0))
    with pytest.raises(ValueError):
        core_segment(C1, cyl((0, 0.5, 0), (1, 0, 0)))
    with pytest.raises(ValueError):
        core_segment(C1, cyl((0, 0, 5), (0, 1, 0)))


def test_common_perpendicular():
    t1, t2, d = common_perpendicular(Line3.through((0, 0, 0), (1, 0, 0)),
                                     Line3.through((3, 0, 2), (0, 1, 0)))
    assert (t1, t2, d) == pytest.approx((3.0, 0.0, 2.0))


def test_hausdorff_helper():
    assert hausdorff_segments((np.zeros(3), np.array([1.0, 0, 0])),
                              (np.array([0, 1.0, 0]), np.array([1.0, 1, 0]))) == pytest.approx(1)


def test_polyline_basics():
    p = Polyline([[0, 0, 0], [1, 0, 0], [1, 1, 0]])
    assert p.times() == pytest.approx([0, 0.5, 1])
    assert p(0.75) == pytest.approx([1, 0.5, 0])
    assert len(p.restrict(0.25, 0.75)) == 3
    with pytest.raises(ValueError):
        Polyline([[0, 0, 0]])
    with pytest.raises(ValueError):
        Polyline([[0, 0, 0], [0, 0, 0]])


def test_tube_single_cylinder():
    C1 = cyl((0, 0, 0), (1, 0, 0))
    C2 = cyl((0, 0, 0), (0, 1, 0))
    eta = Polyline([[-300, 0.5, 0], [0, -0.5, 0.5], [300, 0, 0]])
    res = tube_from_two_cylinders(C1, C2, eta, 1000)
    assert (res.t1, res.t2) == (0.0, 1.0)
    assert res.max_distance <= 1.0 and verify_tube(res, 1000)


def test_tube_parallel_zigzag():
    C1 = cyl((0, 0, 0), (1, 0, 0))
    C2 = cyl((0, 1.5, 0), (1, 0, 0))
    V = [[x, 0.0 if k % 2 == 0 else 1.5, 0.0] for k, x in enumerate(np.linspace(-200, 200, 9))]
    res = tube_from_two_cylinders(C1, C2, Polyline(V), 1000)
    assert res.case == "parallel" and res.line == C1.axis
    assert res.max_distance <= 4.0 and verify_tube(res, 1000)


def test_tube_disjoint():
    C1 = cyl((0, 0, 0), (1, 0, 0))
    C2 = cyl((0, 0, 10), (0, 1, 0))
    res = tube_from_two_cylinders(C1, C2, Polyline([[-100, 0, 0], [100, 0, 0]]), 1000)
    assert res.line == C1.axis and verify_tube(res, 1000)


def test_tube_preconditions():
    C1 = cyl((0, 0, 0), (1, 0, 0))
    C2 = cyl((0, 0, 0), (0, 1, 0))
    with pytest.raises(PreconditionError, match="vertex 1"):
        tube_from_two_cylinders(C1, C2, Polyline([[-100, 0, 0], [0, 5, 5], [100, 0, 0]]), 1000)
    with pytest.raises(PreconditionError, match="apart"):
        tube_from_two_cylinders(C1, C2, Polyline([[-10, 0, 0], [10, 0, 0]]), 1000)
    with pytest.raises(PreconditionError, match="midpoint"):
        # both vertices inside, the chord between them leaves the union
        tube_from_two_cylinders(C1, C2, Polyline([[-100, 0, 0], [0, 100, 0], [100, 0, 0]]), 1000)


def test_random_tubes():
    rng = np.random.default_rng(9)
    cases = set()
    for _ in range(60):
        C1, C2, eta = random_tube_instance(rng, 1000)
        res = tube_from_two_cylinders(C1, C2, eta, 1000)
        assert verify_tube(res, 1000), res
        cases.add(res.case)
    assert cases & {"inside C1", "inside C2", "through core"}


def test_corpus_roundtrip(tmp_path):
    rng = np.random.default_rng(10)
    inst = [random_tube_instance(rng, 1000) for _ in range(5)]
    p = tmp_path / "c.txt"
    write_corpus(p, inst)
    back = read_corpus(p)
    for (a1, a2, e), (b1, b2, f) in zip(inst, back):
        assert a1 == b1 and a2 == b2 and np.array_equal(e.vertices, f.vertices)
    out = tmp_path / "r.txt"
    assert run_tube_corpus(p, out, 1000) == (5, 0)
    assert all(l.split()[-5] == "PASS" for l in out.read_text().splitlines())


def test_horizon_kernel_matches_polygon_oracle():
    rng = np.random.default_rng(11)
    for _ in range(300):
        p = rng.uniform(-2000, 2000, 2)
        th = rng.uniform(0, np.pi)
        got = _free_runs_max(p[0], p[1], math.cos(th), math.sin(th), 20.0, 2e4, T.period)
        want = free_runs_exact(p, th, 20.0, 2e4)
        assert got == pytest.approx(want, abs=2e-3)


def test_edge_parallel_run():
    v0, v1 = T.central_vertices[0], T.central_vertices[1]
    th = math.atan2(*(v1 - v0)[::-1]) % math.pi
    mid = 0.5 * (v0 + v1)
    assert free_runs_exact(mid, th, 20.0) >= T.edge_length


def test_horizon_unbounded_and_monotone():
    assert horizon_scan(1200.0, 360, 100).unbounded
    small = horizon_scan(5.0, 360, 100).max_length
    big = horizon_scan(20.0, 360, 100).max_length
    assert small <= big < 1e4
    with pytest.raises(ValueError):
        horizon_scan(20.0, 100, 100)
    assert len(offset_grid(400)) == 400


def test_blocking_vertical_pair():
    C1 = cyl((10, 0, 0), (0, 0, 1))
    C2 = cyl((0, 10, 0), (0, 0, 1))
    assert blocking_check(C1, C2, (0.0, 0.0), 1e5)
    with pytest.raises(ValueError):
        blocking_check(C1, C2, (0.0, 0.0), 1e4)


def test_blocking_edge_hugging_and_slab():
    v = T.central_vertices
    pair = []
    for k in (0, 1):
        mid = 0.5 * (v[k] + v[k + 1])
        pair.append(cyl((*mid, 0.5), (*(v[k + 1] - v[k]), 0.0)))
    assert blocking_check(pair[0], pair[1], (0.0, 0.0), 1e5)
    assert slab_check(pair[0], (0.0, 0.0), 1e5) <= 10.0
