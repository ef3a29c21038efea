import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cylperc.geometry import (DEFAULT_TILING, Cylinder, HexTiling, Line3, SurfaceH,
                              canonical_direction, dist_point_line, hex_height_scalar, lift_to_H,
                              map_F, project)

T = DEFAULT_TILING
coord = st.floats(-1e4, 1e4, allow_nan=False)


def brute_height(x, tiling=T):
    """Distance to the union of the edges of the 3x3 block of faces around x."""
    c = tiling.nearest_center(np.asarray(x))
    best = np.inf
    verts = tiling.central_vertices
    for v in list(tiling.neighbor_vectors) + [np.zeros(2)]:
        cc = c + v
        for k in range(6):
            a, b = cc + verts[k], cc + verts[(k + 1) % 6]
            ab = b - a
            t = np.clip((x - a) @ ab / (ab @ ab), 0, 1)
            best = min(best, np.linalg.norm(x - (a + t * ab)))
    return best


@given(coord, coord)
@settings(max_examples=300)
def test_height_matches_edge_distance(x, y):
    p = np.array([x, y])
    assert abs(T.dist_to_boundary(p) - brute_height(p)) < 1e-7


@given(coord, coord)
def test_scalar_kernel_agrees(x, y):
    assert abs(hex_height_scalar(x, y, T.period) - T.dist_to_boundary(np.array([x, y]))) < 1e-9


@given(coord, coord, st.integers(-3, 3), st.integers(-3, 3))
def test_height_periodic(x, y, i, j):
    p = np.array([x, y])
    q = p + i * T.basis[0] + j * T.basis[1]
    assert abs(T.dist_to_boundary(p) - T.dist_to_boundary(q)) < 1e-6


def test_height_range_and_landmarks():
    rng = np.random.default_rng(0)
    z = T.dist_to_boundary(rng.uniform(-5e3, 5e3, (20000, 2)))
    assert z.min() >= 0 and z.max() <= T.apothem + 1e-9
    assert T.dist_to_boundary(np.zeros(2)) == pytest.approx(T.apothem)
    assert T.dist_to_boundary(T.central_vertices[0]) == pytest.approx(0, abs=1e-9)
    assert T.edge_length == pytest.approx(2000 / math.sqrt(3))


def test_surface_height_is_one_lipschitz():
    rng = np.random.default_rng(1)
    p = rng.uniform(-3e3, 3e3, (50000, 2))
    q = p + rng.normal(size=p.shape)
    ratio = np.abs(T.dist_to_boundary(p) - T.dist_to_boundary(q)) / np.linalg.norm(p - q, axis=1)
    assert ratio.max() <= 1 + 1e-9


@given(st.lists(coord, min_size=6, max_size=6), st.floats(0, 1000), st.floats(0, 1000))
def test_F_lipschitz_sqrt2(v, z1, z2):
    p = np.array([v[0], v[1], z1])
    q = np.array([v[2], v[3], z2])
    d = np.linalg.norm(p - q)
    if d < 1e-9:
        return
    assert np.linalg.norm(map_F(p) - map_F(q)) <= math.sqrt(2) * d + 1e-9


def test_F_fixes_surface():
    rng = np.random.default_rng(2)
    pts = lift_to_H(rng.uniform(-4e3, 4e3, (1000, 2)))
    assert np.allclose(map_F(pts), pts)
    assert SurfaceH().contains(pts).all()
    assert np.array_equal(project(pts), pts[:, :2])


def test_line_canonical_form():
    l1 = Line3.through((1, 2, 3), (0, 0, -2))
    l2 = Line3.through((1, 2, -7), (0, 0, 1))
    assert l1 == l2
    assert l1.dir == (0.0, 0.0, 1.0)
    assert np.allclose(l1.anchor, (1, 2, 0))
    with pytest.raises(ValueError):
        canonical_direction((0, 0, 0))


def test_cylinder_membership():
    c = Cylinder(Line3.through((0, 0, 0), (1, 0, 0)))
    assert c.contains((5, 0.6, 0.8))
    assert not c.contains((5, 0.7, 0.8))
    assert dist_point_line(np.array([3.0, 3.0, 4.0]), c.axis) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        Cylinder(c.axis, 0.0)


def test_central_face_sampling():
    rng = np.random.default_rng(3)
    pts = T.sample_central_face(500, rng)
    assert T.in_central_face(pts).all()
    assert np.all(T.dist_to_central_face(pts) == 0)
    far = np.array([[3000.0, 0.0]])
    assert T.dist_to_central_face(far)[0] == pytest.approx(3000 - T.apothem)


def test_tiling_validation():
    with pytest.raises(ValueError):
        HexTiling(0)
    assert HexTiling(10) == HexTiling(10.0)
