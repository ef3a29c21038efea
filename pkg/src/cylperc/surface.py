"""Obstacle and vacant sets on the surface H (and on the plane z=0) over grids.

Everything here works with center-point occupancy: a cell is occupied iff
its center, lifted to the surface, lies in some sampled cylinder. Vacant
paths use 4-connectivity and obstacle paths 8-connectivity, which makes the
vacant crossing / obstacle circuit dichotomy exact on each grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _raster as R
from .geometry import DEFAULT_TILING, HexTiling, Line3
from .lines import CoverageError, DiskSlab, LineSample, covers

MAX_GRID_CELLS = 10**8
DEFAULT_VACANT_H = 0.25
DEFAULT_TRACE_H = 0.5


class GridTooLargeError(MemoryError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """A square lattice of cells; cell (i, j) is centered at origin + (i+1/2, j+1/2) h."""

    origin: tuple
    h: float
    nx: int
    ny: int

    @classmethod
    def around(cls, center, radius: float, h: float) -> "GridSpec":
        n = int(math.ceil(2.0 * (radius + 2.0 * h) / h))
        ox = float(center[0]) - 0.5 * n * h
        oy = float(center[1]) - 0.5 * n * h
        return cls((ox, oy), float(h), n, n)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def centers(self, ij) -> np.ndarray:
        ij = np.asarray(ij)
        return np.asarray(self.origin) + (ij + 0.5) * self.h

    def keys(self, ij) -> np.ndarray:
        ij = np.asarray(ij, dtype=np.int64)
        return ij[..., 0] * self.ny + ij[..., 1]


@dataclass
class GridMask:
    origin: tuple
    h: float
    nx: int
    ny: int
    occupied: np.ndarray

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.origin, self.h, self.nx, self.ny)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin[0] + (np.arange(self.nx) + 0.5) * self.h
        ys = self.origin[1] + (np.arange(self.ny) + 0.5) * self.h
        return xs, ys

    def to_pgm(self, path) -> None:
        """Binary PGM (P5), occupied cells black; row 0 of the image is the top (max y)."""
        img = np.where(self.occupied.T[::-1], 0, 255).astype(np.uint8)
        with open(path, "wb") as f:
            f.write(f"P5\n{self.nx} {self.ny}\n255\n".encode())
            f.write(img.tobytes())


@dataclass
class TraceComponent:
    cylinder_id: int
    cells: np.ndarray = field(repr=False)  # (k, 2) int64
    bbox: tuple = ()

    def __post_init__(self):
        if not self.bbox and len(self.cells):
            lo = self.cells.min(axis=0)
            hi = self.cells.max(axis=0)
            self.bbox = (int(lo[0]), int(lo[1]), int(hi[0]), int(hi[1]))


def _mode(surface: str) -> int:
    if surface == "H":
        return R.MODE_H
    if surface == "plane":
        return R.MODE_PLANE
    raise ValueError(f"unknown surface {surface!r}")


def _z_range(center, radius: float, tiling: HexTiling, surface: str) -> tuple[float, float]:
    if surface == "plane":
        return 0.0, 0.0
    hc = float(tiling.dist_to_boundary(np.asarray(center, dtype=float)[:2]))
    return max(0.0, hc - radius), min(tiling.apothem, hc + radius)


def _arrays(lines) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(lines, LineSample):
        return np.ascontiguousarray(lines.anchors), np.ascontiguousarray(lines.dirs)
    lines = list(lines)
    if not lines:
        return np.empty((0, 3)), np.empty((0, 3))
    return (np.array([l.anchor for l in lines], dtype=float),
            np.array([l.dir for l in lines], dtype=float))


def rasterize(lines, grid: GridSpec, clip_center, clip_radius: float, surface: str = "H",
              radius: float = 1.0, tiling: HexTiling = DEFAULT_TILING) -> GridMask:
    """Dense occupancy of all cells with center within ``clip_radius`` of ``clip_center``."""
    if grid.size > MAX_GRID_CELLS:
        raise GridTooLargeError(f"grid of {grid.size} cells exceeds {MAX_GRID_CELLS}")
    A, D = _arrays(lines)
    zlo, zhi = _z_range(clip_center, clip_radius, tiling, surface)
    mask = np.zeros((grid.nx, grid.ny), dtype=np.bool_)
    R.raster_dense(A, D, float(radius), grid.h, _mode(surface), tiling.period,
                   grid.origin[0], grid.origin[1], grid.nx, grid.ny,
                   float(clip_center[0]), float(clip_center[1]), float(clip_radius),
                   zlo, zhi, mask)
    return GridMask(grid.origin, grid.h, grid.nx, grid.ny, mask)


def rasterize_sparse(lines, grid: GridSpec, clip_center, clip_radius: float,
                     surface: str = "H", radius: float = 1.0,
                     tiling: HexTiling = DEFAULT_TILING) -> np.ndarray:
    """Occupied cells as rows ``(line index, i, j)``; a cell may appear for several lines."""
    A, D = _arrays(lines)
    zlo, zhi = _z_range(clip_center, clip_radius, tiling, surface)
    return R.raster_sparse(A, D, float(radius), grid.h, _mode(surface), tiling.period,
                           grid.origin[0], grid.origin[1], grid.nx, grid.ny,
                           float(clip_center[0]), float(clip_center[1]), float(clip_radius),
                           zlo, zhi)


def membership(lines, points, surface: str = "H", radius: float = 1.0,
               tiling: HexTiling = DEFAULT_TILING) -> np.ndarray:
    """Exact predicate: lifted point lies in some cylinder (brute force oracle)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    z = tiling.dist_to_boundary(pts) if _mode(surface) == R.MODE_H else np.zeros(len(pts))
    P = np.column_stack([pts, z])
    A, D = _arrays(lines)
    out = np.zeros(len(pts), dtype=bool)
    for a, d in zip(A, D):
        w = P - a
        t = w @ d
        d2 = np.einsum("ij,ij->i", w, w) - t * t
        out |= d2 <= radius * radius
    return out


def _components(cells: np.ndarray, ny: int) -> list[np.ndarray]:
    if len(cells) == 0:
        return []
    keys = np.unique(cells[:, 0] * ny + cells[:, 1])
    lab = R.label_sparse_cells(keys, ny)
    order = np.argsort(lab, kind="stable")
    lab_sorted = lab[order]
    cuts = np.flatnonzero(np.diff(lab_sorted)) + 1
    out = []
    for grp in np.split(order, cuts):
        k = keys[grp]
        out.append(np.column_stack([k // ny, k % ny]))
    return out


def trace_cylinder_on_H(l: Line3, region, h: float, grid: GridSpec | None = None,
                        cylinder_id: int = 0,
                        tiling: HexTiling = DEFAULT_TILING) -> list[TraceComponent]:
    """8-connected pieces of the cylinder's trace on H inside the disk ``region``.

    ``region`` is ``(center, radius)``. Cells live on ``grid`` (by default a
    grid centered on the region).
    """
    if h > 0.5:
        raise ValueError("trace resolution must satisfy h <= 0.5")
    center, radius = region
    if grid is None:
        grid = GridSpec.around(center, radius, h)
    rows = rasterize_sparse([l], grid, center, radius, "H", tiling=tiling)
    return [TraceComponent(cylinder_id, c) for c in _components(rows[:, 1:], grid.ny)]


def _cell_distance_bounds(grid: GridSpec, cells: np.ndarray, center) -> tuple[np.ndarray, np.ndarray]:
    xy = grid.centers(cells)
    half = 0.5 * grid.h
    d = np.abs(xy - np.asarray(center, dtype=float)[:2])
    dmin = np.hypot(np.maximum(d[:, 0] - half, 0), np.maximum(d[:, 1] - half, 0))
    dmax = np.hypot(d[:, 0] + half, d[:, 1] + half)
    return dmin, dmax


@dataclass
class ComponentGraph:
    grid: GridSpec
    nodes: list
    edges: set
    inner_links: set
    outer_links: set

    INNER = -1
    OUTER = -2

    def neighbours(self, v: int) -> set:
        out = set()
        for a, b in self.edges:
            if a == v:
                out.add(b)
            elif b == v:
                out.add(a)
        if v == self.INNER:
            out |= self.inner_links
        if v == self.OUTER:
            out |= self.outer_links
        if v in self.inner_links:
            out.add(self.INNER)
        if v in self.outer_links:
            out.add(self.OUTER)
        return out

    def terminals_connected(self) -> bool:
        n = len(self.nodes)
        parent = list(range(n + 2))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[rb] = ra

        for a, b in self.edges:
            union(a, b)
        for v in self.inner_links:
            union(n, v)
        for v in self.outer_links:
            union(n + 1, v)
        return find(n) == find(n + 1)


def build_component_graph(traces, inner, outer, grid: GridSpec) -> ComponentGraph:
    """Link trace components whose cells coincide or are 8-adjacent.

    ``inner`` is a disk ``(center, radius)``: linked components have a cell
    whose square meets it. ``outer`` is a circle ``(center, radius)``: linked
    components have a cell whose square straddles it.
    """
    nodes = list(traces)
    for t in nodes:
        if getattr(t, "grid", grid) != grid:
            raise ValueError("trace components come from different grids")
    edges: set = set()
    inner_links: set = set()
    outer_links: set = set()
    if nodes:
        owner = np.concatenate([np.full(len(t.cells), k, dtype=np.int64) for k, t in enumerate(nodes)])
        cells = np.concatenate([t.cells for t in nodes]).astype(np.int64)
        keys = grid.keys(cells)
        order = np.argsort(keys, kind="stable")
        skeys = keys[order]
        sown = owner[order]
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                nk = (cells[:, 0] + di) * grid.ny + (cells[:, 1] + dj)
                lo = np.searchsorted(skeys, nk, side="left")
                hi = np.searchsorted(skeys, nk, side="right")
                cnt = hi - lo
                hit = np.flatnonzero(cnt)
                if hit.size == 0:
                    continue
                # expand each hit into its run of matching sorted cells
                reps = cnt[hit]
                src = np.repeat(hit, reps)
                start = np.repeat(lo[hit] - np.cumsum(reps) + reps, reps)
                pos = start + np.arange(reps.sum())
                a, b = owner[src], sown[pos]
                m = a != b
                pairs = np.unique(np.column_stack([np.minimum(a[m], b[m]), np.maximum(a[m], b[m])]), axis=0)
                edges.update(map(tuple, pairs.tolist()))
        (ic, ir), (oc, orad) = inner, outer
        dmin_i, _ = _cell_distance_bounds(grid, cells, ic)
        dmin_o, dmax_o = _cell_distance_bounds(grid, cells, oc)
        inner_links = set(np.unique(owner[dmin_i <= ir]).tolist())
        outer_links = set(np.unique(owner[(dmin_o <= orad) & (dmax_o >= orad)]).tolist())
    return ComponentGraph(grid, nodes, edges, inner_links, outer_links)


def required_window(center, radius: float, surface: str = "H",
                    tiling: HexTiling = DEFAULT_TILING) -> DiskSlab:
    """Smallest disk-slab a sample must cover for events in the disk ``(center, radius)``."""
    zlo, zhi = _z_range(center, radius, tiling, surface)
    return DiskSlab(tuple(np.asarray(center, dtype=float)[:2]), float(radius), (zlo, zhi))


def _check_window(s: LineSample, center, radius: float, surface: str,
                  tiling: HexTiling = DEFAULT_TILING) -> None:
    need = required_window(center, radius, surface, tiling)
    if not covers(s.window, need):
        raise CoverageError(f"sample window {s.window} does not cover {need}")


def obstacle_crossing(s: LineSample, x0, a: float, h: float = DEFAULT_TRACE_H,
                      tiling: HexTiling = DEFAULT_TILING) -> bool:
    """The event that the projected obstacle set on H joins S(x0, a/10) to the circle of radius a."""
    _check_window(s, x0, a, "H", tiling)
    grid = GridSpec.around(x0, a, h)
    rows = rasterize_sparse(s, grid, x0, a + h, "H", tiling=tiling)
    nodes = []
    for k in np.unique(rows[:, 0]):
        cells = rows[rows[:, 0] == k, 1:]
        for c in _components(cells, grid.ny):
            nodes.append(TraceComponent(int(k), c))
    g = build_component_graph(nodes, (x0, a / 10.0), (x0, a), grid)
    return g.terminals_connected()


def obstacle_crossing_cells(s: LineSample, x0, a: float, h: float = DEFAULT_TRACE_H,
                            tiling: HexTiling = DEFAULT_TILING) -> bool:
    """Same event as :func:`obstacle_crossing`, decided by union-find directly on cells.

    Much faster for large samples; equivalent because a component graph's
    connectivity is that of the union of its cells.
    """
    _check_window(s, x0, a, "H", tiling)
    grid = GridSpec.around(x0, a, h)
    rows = rasterize_sparse(s, grid, x0, a + h, "H", tiling=tiling)
    if len(rows) == 0:
        return False
    keys = np.unique(rows[:, 1] * grid.ny + rows[:, 2])
    lab = R.label_sparse_cells(keys, grid.ny)
    cells = np.column_stack([keys // grid.ny, keys % grid.ny])
    dmin_i, _ = _cell_distance_bounds(grid, cells, x0)
    dmin_o, dmax_o = _cell_distance_bounds(grid, cells, x0)
    inner = np.unique(lab[dmin_i <= a / 10.0])
    outer = np.unique(lab[(dmin_o <= a) & (dmax_o >= a)])
    return bool(np.intersect1d(inner, outer).size)


def _annulus_grid(s: LineSample, x0, r_in: float, r_out: float, h: float, surface: str,
                  tiling: HexTiling):
    if not 0 < r_in < r_out:
        raise ValueError("need 0 < r_in < r_out")
    if r_in < 2 * h:
        raise ValueError("inner radius must be at least two cells")
    _check_window(s, x0, r_out, surface, tiling)
    grid = GridSpec.around(x0, r_out, h)
    if grid.size > MAX_GRID_CELLS:
        raise GridTooLargeError(f"grid of {grid.size} cells exceeds {MAX_GRID_CELLS}")
    mask = rasterize(s, grid, x0, r_out, surface, tiling=tiling)
    cls = R.classify_cells(grid.origin[0], grid.origin[1], h, grid.nx, grid.ny,
                           float(x0[0]), float(x0[1]), float(r_in), float(r_out))
    return grid, mask, cls


def vacant_crossing(s: LineSample, x0, r_in: float, r_out: float, h: float = DEFAULT_VACANT_H,
                    surface: str = "H", tiling: HexTiling = DEFAULT_TILING) -> bool:
    """4-connected vacant path from the cells meeting S(x0, r_in) to the cells meeting
    the exterior of S(x0, r_out)."""
    _, mask, cls = _annulus_grid(s, x0, r_in, r_out, h, surface, tiling)
    return bool(R.vacant_crossing_grid(mask.occupied, cls))


def obstacle_circuit(s: LineSample, x0, r_in: float, r_out: float, h: float = DEFAULT_VACANT_H,
                     surface: str = "H", tiling: HexTiling = DEFAULT_TILING) -> bool:
    """8-connected loop of occupied annulus cells winding around x0."""
    grid, mask, cls = _annulus_grid(s, x0, r_in, r_out, h, surface, tiling)
    return bool(R.occupied_circuit_grid(mask.occupied, cls, grid.origin[0], grid.origin[1], h,
                                        float(x0[0]), float(x0[1])))


def crossing_and_circuit(s: LineSample, x0, r_in: float, r_out: float,
                         h: float = DEFAULT_VACANT_H, surface: str = "H",
                         tiling: HexTiling = DEFAULT_TILING) -> tuple[bool, bool]:
    """Both dual events on one rasterisation."""
    grid, mask, cls = _annulus_grid(s, x0, r_in, r_out, h, surface, tiling)
    cross = bool(R.vacant_crossing_grid(mask.occupied, cls))
    circ = bool(R.occupied_circuit_grid(mask.occupied, cls, grid.origin[0], grid.origin[1], h,
                                        float(x0[0]), float(x0[1])))
    return cross, circ


def nested_crossings(s: LineSample, x0, r_in: float, radii, h: float = DEFAULT_VACANT_H,
                     surface: str = "H", tiling: HexTiling = DEFAULT_TILING,
                     check_duality: bool = False):
    """Vacant crossings for several outer radii from one rasterisation at the largest.

    Returns a list of crossing booleans and, with ``check_duality``, the list
    of circuit booleans too.
    """
    radii = sorted(float(r) for r in radii)
    grid, mask, _ = _annulus_grid(s, x0, r_in, radii[-1], h, surface, tiling)
    cross, circ = [], []
    for r in radii:
        sub = GridSpec.around(x0, r, h)
        off = (grid.nx - sub.nx) // 2
        occ = np.ascontiguousarray(mask.occupied[off:off + sub.nx, off:off + sub.ny])
        ox = grid.origin[0] + off * h
        oy = grid.origin[1] + off * h
        cls = R.classify_cells(ox, oy, h, sub.nx, sub.ny, float(x0[0]), float(x0[1]),
                               float(r_in), r)
        cross.append(bool(R.vacant_crossing_grid(occ, cls)))
        if check_duality:
            circ.append(bool(R.occupied_circuit_grid(occ, cls, ox, oy, h,
                                                     float(x0[0]), float(x0[1]))))
    return (cross, circ) if check_duality else cross


@dataclass(frozen=True)
class PlaneRegion:
    """Section of a unit cylinder by the plane z=0."""

    kind: str  # "ellipse", "strip" or "empty"
    center: tuple = (0.0, 0.0)
    semi_axes: tuple = (0.0, 0.0)  # (along the projected axis, across it)
    angle: float = 0.0  # direction of the first semi-axis
    width: float = 0.0  # full strip width

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        if self.kind == "empty":
            return np.zeros(len(pts), dtype=bool)
        c, s_ = math.cos(self.angle), math.sin(self.angle)
        w = pts - np.asarray(self.center)
        along = w[:, 0] * c + w[:, 1] * s_
        across = -w[:, 0] * s_ + w[:, 1] * c
        if self.kind == "strip":
            return np.abs(across) <= 0.5 * self.width
        A, B = self.semi_axes
        return (along / A) ** 2 + (across / B) ** 2 <= 1.0


def plane_obstacle_region(l: Line3, radius: float = 1.0) -> PlaneRegion:
    a, d = l.a, l.d
    hs = math.hypot(d[0], d[1])
    angle = math.atan2(d[1], d[0]) if hs > 0 else 0.0
    if abs(d[2]) < 1e-15:
        if abs(a[2]) > radius:
            return PlaneRegion("empty")
        return PlaneRegion("strip", (a[0], a[1]), angle=angle,
                           width=2.0 * math.sqrt(radius * radius - a[2] * a[2]))
    t = -a[2] / d[2]
    c = (a[0] + t * d[0], a[1] + t * d[1])
    sin_t = abs(d[2])
    return PlaneRegion("ellipse", c, (radius / sin_t, radius), angle)


def plane_vacant_crossing(s: LineSample, x0, r_in: float, r_out: float,
                          h: float = DEFAULT_VACANT_H) -> bool:
    return vacant_crossing(s, x0, r_in, r_out, h, surface="plane")


def plane_obstacle_circuit(s: LineSample, x0, r_in: float, r_out: float,
                           h: float = DEFAULT_VACANT_H) -> bool:
    return obstacle_circuit(s, x0, r_in, r_out, h, surface="plane")


@dataclass
class ClusterStats:
    sizes: np.ndarray  # vacant component sizes, descending
    vacant: int
    occupied: int
    total: int

    @property
    def largest_fraction(self) -> float:
        return float(self.sizes[0]) / self.total if len(self.sizes) else 0.0

    def histogram(self) -> dict:
        vals, counts = np.unique(self.sizes, return_counts=True)
        return dict(zip(vals.tolist(), counts.tolist()))


def cluster_stats(s: LineSample, window, h: float = DEFAULT_VACANT_H,
                  tiling: HexTiling = DEFAULT_TILING) -> ClusterStats:
    """Vacant 4-connected components on H among cells centered in the disk ``window``."""
    center, radius = window
    if radius > 500:
        raise ValueError("cluster statistics are limited to radius 500")
    _check_window(s, center, radius, "H", tiling)
    grid = GridSpec.around(center, radius, h)
    mask = rasterize(s, grid, center, radius, "H", tiling=tiling)
    xs, ys = mask.cell_centers()
    inside = (xs[:, None] - center[0]) ** 2 + (ys[None, :] - center[1]) ** 2 <= radius * radius
    vac = inside & ~mask.occupied
    lab, n = ndimage.label(vac)
    sizes = np.bincount(lab.ravel())[1:] if n else np.zeros(0, dtype=np.int64)
    sizes = np.sort(sizes)[::-1]
    nv = int(vac.sum())
    tot = int(inside.sum())
    return ClusterStats(sizes, nv, tot - nv, tot)
