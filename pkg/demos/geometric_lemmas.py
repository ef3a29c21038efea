"""Deterministic geometry behind the triggering argument.

Core segments of intersecting cylinders, the tube construction along a path
through two cylinders, and the free-path horizon near the hexagon edges.
"""
import numpy as np

from cylperc.lemmas import (core_segment, horizon_scan, random_intersecting_pair,
                            random_tube_instance, tube_from_two_cylinders, verify_tube)

rng = np.random.default_rng(4)
hs = [core_segment(*random_intersecting_pair(rng)).hausdorff_segments() for _ in range(500)]
print(f"core segments: max Hausdorff distance {max(hs):.3f} over 500 pairs (bound 2)")

ok = 0
for _ in range(200):
    C1, C2, eta = random_tube_instance(rng, 1000.0)
    ok += verify_tube(tube_from_two_cylinders(C1, C2, eta, 1000.0), 1000.0)
print(f"tube construction verified on {ok}/200 random paths")

for pad in (5.0, 20.0, 100.0):
    r = horizon_scan(pad, 360, 100)
    print(f"horizon of the {pad:g}-neighbourhood of the edges: {r.max_length:.1f}")
