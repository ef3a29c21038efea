"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances are the stated ones. Criteria that cannot hold at desk scale are
kept as written and fail; see the decision log for the analysis.
"""
import math
import time

import mpmath
import numpy as np
import pytest
from scipy import stats

from cylperc.geometry import DEFAULT_TILING, map_F
from cylperc.harness import RunConfig, run_experiment, splitmix64
from cylperc.lines import Ball, DiskSlab, estimate_mu_hitting_both, hits_window, sample_poisson
from cylperc.renorm import (A0_FULL, ScaleSequence, a0_hat, build_covering, check_induction_step,
                            count_touched, estimate_pn, excluded_index, induction_exponents,
                            iterate_recursion, projected_axis_distance, random_cylinder_pairs,
                            random_sphere_points, scale_float, select_secant_indices,
                            smallest_k0, tail_bound, uncovered)

pytestmark = pytest.mark.acceptance

A0S = (8000.0, 1e5, 1e6)
DUALITY_VIOLATIONS = []


@pytest.fixture
def report(capsys):
    t0 = time.perf_counter()

    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}  "
                  f"[{time.perf_counter() - t0:.1f}s]")
        assert ok, detail
    return emit


def _run(name, **kw):
    return run_experiment(RunConfig(**kw), name, write=False)


def test_c01_void_probability(report):
    r = _run("vacancy", u=0.2, reps=100_000, seed=101)[0]
    want = math.exp(-0.2 * math.pi)
    z = abs(r.estimate - want) / r.stderr
    report(1, z <= 3, f"vacancy {r.estimate:.5f} +- {r.stderr:.5f} vs {want:.5f} (z={z:.2f})")


def test_c02_covariance_decay(report):
    recs = _run("cov", u=0.5, reps=200_000, seed=102, distances=(4.0, 8.0, 16.0, 32.0, 64.0))
    slope = next(r.estimate for r in recs if r.params["kind"] == "slope")
    by = {}
    for r in recs:
        if r.params["kind"] in ("mc", "semi"):
            by.setdefault(r.params["distance"], {})[r.params["kind"]] = r
    zs = []
    for d, kv in sorted(by.items()):
        mc, semi = kv["mc"], kv["semi"]
        zs.append(abs(mc.estimate - semi.estimate) / math.hypot(mc.stderr, semi.stderr))
    ok = abs(slope + 2) <= 0.3 and max(zs) <= 3
    report(2, ok, f"slope {slope:.3f}; max |mc-semi| z {max(zs):.2f}")


def test_c03_sampler_calibration(report):
    seeds = [splitmix64(103, k) for k in range(10_000)]
    counts = np.array([len(sample_poisson(1.0, Ball((0, 0, 0), 9.0), s)) for s in seeds])
    z = abs(counts.mean() - 100 * math.pi) / (counts.std(ddof=1) / math.sqrt(len(counts)))

    inner = Ball((0, 0, 0), 20.0)
    restricted, direct = [], []
    for k in range(4000):
        big = sample_poisson(1.0, Ball((0, 0, 0), 50.0), splitmix64(203, k))
        restricted.append(int(hits_window(big.anchors, big.dirs, inner).sum()))
        direct.append(len(sample_poisson(1.0, inner, splitmix64(303, k))))
    edges = np.unique(np.quantile(restricted + direct, np.linspace(0, 1, 11)))
    edges[-1] += 1
    table = [np.histogram(v, edges)[0] for v in (restricted, direct)]
    p = stats.chi2_contingency(table).pvalue
    report(3, z <= 3 and p >= 0.01, f"mean count {counts.mean():.2f} vs {100 * math.pi:.2f} "
                                     f"(z={z:.2f}); restriction test p={p:.3f}")


def test_c04_two_window_scaling(report):
    s = 20.0
    vals = []
    for ratio in (10, 20, 40):
        r = ratio * s
        e = estimate_mu_hitting_both(DiskSlab((0, 0), s), DiskSlab((r, 0), s), 4_000_000,
                                     splitmix64(104, ratio))
        vals.append(e.value * r * r / (s * s))
    spread = max(vals) / min(vals)
    report(4, spread <= 2, "mu*r^2/s^2 = " + ", ".join(f"{v:.1f}" for v in vals)
           + f"; spread {spread:.2f}")


def test_c05_covering_soundness(report):
    bad = 0
    for a0 in A0S:
        seq = ScaleSequence(a0)
        for i in (1, 2, 3, 4):
            cov = build_covering(seq, 1, i)
            rng = np.random.default_rng(splitmix64(105, 10 * i + int(math.log10(a0))))
            bad += int(uncovered(cov, random_sphere_points(cov, 1000, rng)).sum())
    report(5, bad == 0, f"{bad} uncovered points out of {1000 * 12}")


def test_c06_cardinality_law(report):
    vals = []
    for a0 in A0S:
        seq = ScaleSequence(a0)
        ratio = scale_float(seq, 0) / scale_float(seq, 1)
        vals += [len(build_covering(seq, 1, i)) * ratio for i in (1, 2, 3, 4)]
    vals = np.array(vals)
    # c works iff max/1.5 <= c <= 2 min; take the middle of that interval when it exists
    lo, hi = vals.max() / 1.5, 2 * vals.min()
    c = 0.5 * (lo + hi)
    ok = bool(lo <= hi and np.all((vals >= 0.5 * c) & (vals <= 1.5 * c)))
    report(6, ok, f"ratios in [{vals.min():.0f}, {vals.max():.0f}]; constant {c:.0f}")


def test_c07_secant_counting(report):
    maxima, excl_ok = [], True
    for a0 in A0S:
        seq = ScaleSequence(a0)
        a_n = scale_float(seq, 1)
        cov = {i: build_covering(seq, 1, i) for i in (1, 2, 3, 4)}
        worst = 0
        for C1, C2 in random_cylinder_pairs(seq, 1, 1000, splitmix64(107, int(a0))):
            i, j = select_secant_indices(seq, 1, C1, C2)
            for k in (i, j):
                for C in (C1, C2):
                    excl_ok &= excluded_index(projected_axis_distance(C), a_n) != k
                worst = max(worst, count_touched(cov[k], C1, C2))
        maxima.append(worst)
    ok = excl_ok and len(set(maxima)) == 1
    report(7, ok, f"max touched per a0 {maxima}; exclusion holds: {excl_ok}")


def test_c08_tube_lemma(report):
    r = _run("lemma_tube", reps=10_000, a0=1000.0, seed=108)[0]
    p = r.params
    report(8, p["failures"] == 0, f"{p['failures']} failures; min separation "
                                  f"{p['min_separation']:.1f}, max distance {p['max_distance']:.4f}")


def test_c09_hausdorff_bounds(report):
    seg, end = _run("lemma_core", reps=10_000, seed=109)
    ok = seg.params["failures"] == 0 and seg.estimate <= 2 and end.estimate <= 2 * math.sqrt(2) + 1e-6
    report(9, ok, f"max {seg.estimate:.4f} (<= 2), {end.estimate:.4f} (<= {2 * math.sqrt(2):.4f})")


def test_c10_horizon(report):
    r = _run("lemma_horizon", padding=20.0, directions=720, offsets=400)[0]
    ok = 1154 <= r.estimate <= 1e4
    report(10, ok, f"max free segment {r.estimate:.2f} at theta {r.params['theta']:.4f}")


def test_c11_F_lipschitz(report):
    rng = np.random.default_rng(111)
    n = 100_000
    p = np.column_stack([rng.uniform(-3000, 3000, (n, 2)), rng.uniform(-200, 1200, n)])
    scale = 10.0 ** rng.uniform(-3, 3, n)
    q = p + scale[:, None] * rng.standard_normal((n, 3))
    num = np.linalg.norm(map_F(p, DEFAULT_TILING) - map_F(q, DEFAULT_TILING), axis=1)
    ratio = float(np.max(num / np.linalg.norm(p - q, axis=1)))
    report(11, ratio <= math.sqrt(2) + 1e-9, f"max ratio {ratio:.9f}")


def test_c12_induction_arithmetic(report):
    (l1, r1), (l2, r2) = induction_exponents()
    steps = {c: check_induction_step(max(A0_FULL, a0_hat(c, c)), c, c) for c in (1, 10)}
    ok = l1 < r1 and l2 < r2 and all(steps.values())
    report(12, ok, f"{l1} < {r1}, {l2} < {r2}; step checks {steps}")


def test_c13_recursion(report):
    rows = iterate_recursion(ScaleSequence(a0_hat(1, 1)), 20)
    ok = len(rows) == 21 and all(p <= pt and q <= qt for _, p, q, pt, qt in rows)
    worst = max(float(mpmath.log10(p) - mpmath.log10(pt)) for _, p, _, pt, _ in rows[1:])
    report(13, ok, f"n <= 20 below thresholds; worst log10(p/threshold) {worst:.1f}")


def test_c14_tail(report):
    t = tail_bound(1e16, 1)
    k0 = smallest_k0(A0_FULL)
    ok = t < 2.1e-3 and k0 is not None
    report(14, ok, f"tail(1e16, 1) = {float(t):.6g} (< 2.1e-3); k0 for 288^6: {k0}")


def test_c15_triggering(report):
    blk = _run("lemma_blocking", a0=1e5, reps=1000, seed=7)[0]
    e = estimate_pn(ScaleSequence(1e5), 0, 1e-6, reps=100, seed=115)
    ok = blk.params["not_blocked"] == 0 and e.upper(0.95) <= 0.05
    report(15, ok, f"{blk.params['not_blocked']} of 1000 not blocked; p_0 at u=1e-6: "
                   f"{e.hits}/{e.replicas}, upper95 {e.upper(0.95):.4f}")


def test_c16_plane_vs_H(report):
    recs = _run("contrast", u=0.05, window_radius=100.0, reps=300, seed=116)
    DUALITY_VIOLATIONS.append(recs[0].params["duality_violations"])
    rows = {(r.params["surface"], r.params["radius"]): r for r in recs}
    radii = (100.0, 200.0, 400.0)
    diff_ok = all(rows["H-plane", r].estimate >= -3 * rows["H-plane", r].stderr for r in radii)
    plane = [rows["plane", r] for r in radii]
    dec_ok = all(a.estimate - b.estimate > 2 * math.hypot(a.stderr, b.stderr)
                 for a, b in zip(plane, plane[1:]))
    detail = "; ".join(f"r={r:.0f}: H {rows['H', r].estimate:.3f} plane {rows['plane', r].estimate:.3f}"
                       for r in radii)
    report(16, diff_ok and dec_ok, f"{detail}; H >= plane: {diff_ok}, plane decreasing: {dec_ok}")


def test_c17_duality(report):
    for name in ("crossing_H", "crossing_plane"):
        recs = _run(name, u=0.05, window_radius=100.0, reps=100, seed=117)
        DUALITY_VIOLATIONS.extend(r.params["duality_violations"] for r in recs)
    total = sum(DUALITY_VIOLATIONS)
    report(17, total == 0, f"{total} violations over {len(DUALITY_VIOLATIONS)} runs")
