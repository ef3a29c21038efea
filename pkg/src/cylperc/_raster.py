"""Numba kernels: rasterising cylinder traces and deciding grid crossings.

Cell ``(i, j)`` of a grid with origin ``(ox, oy)`` and spacing ``h`` has its
center at ``(ox + (i + 0.5) h, oy + (j + 0.5) h)``. A cell is occupied iff the
lifted center (on the surface, or on the plane z=0) lies in the cylinder.
"""
import math

import numpy as np
from numba import njit

from .geometry import hex_height_scalar

MODE_PLANE = 0
MODE_H = 1
VERTICAL_EPS = 1e-6


@njit(cache=True)
def _surface_z(x, y, mode, period):
    if mode == MODE_H:
        return hex_height_scalar(x, y, period)
    return 0.0


@njit(cache=True)
def cell_in_cylinder(x, y, mode, period, ax, ay, az, dx, dy, dz, r):
    z = _surface_z(x, y, mode, period)
    wx = x - ax
    wy = y - ay
    wz = z - az
    along = wx * dx + wy * dy + wz * dz
    d2 = wx * wx + wy * wy + wz * wz - along * along
    return d2 <= r * r


@njit(cache=True)
def _disk_t_range(px, py, qx, qy, cx, cy, rho):
    """t-interval where |p + t q - c| <= rho; returns (lo, hi) with lo > hi if empty."""
    wx = px - cx
    wy = py - cy
    A = qx * qx + qy * qy
    B = wx * qx + wy * qy
    C = wx * wx + wy * wy - rho * rho
    disc = B * B - A * C
    if A == 0.0:
        if C <= 0.0:
            return -1e300, 1e300
        return 1.0, -1.0
    if disc < 0.0:
        return 1.0, -1.0
    s = math.sqrt(disc)
    return (-B - s) / A, (-B + s) / A


@njit(cache=True)
def line_intervals(ax, ay, az, dx, dy, dz, r, h, mode, period, cx, cy, R, zlo, zhi):
    """Parameter intervals of the axis whose cylinder can meet the surface over
    the disk ``S(c, R)``.

    Any t at which the cylinder touches the surface at a point projecting into
    the disk lies inside one of the returned intervals. Near-vertical lines
    yield a single interval.
    """
    out = np.empty((0, 2))
    hs = math.hypot(dx, dy)
    if hs < VERTICAL_EPS:
        # parametrise by z; the whole relevant slab
        zm = 0.5 * (zlo + zhi)
        t = (zm - az) / dz
        res = np.empty((1, 2))
        half = 0.5 * (zhi - zlo) + 2.0 * r + h
        res[0, 0] = t - half / abs(dz)
        res[0, 1] = t + half / abs(dz)
        return res
    lo, hi = _disk_t_range(ax, ay, dx, dy, cx, cy, R + r + h)
    if lo > hi:
        return out
    # the surface lies in [zlo, zhi] over the disk
    band = 2.0 * r + h
    if mode == MODE_PLANE:
        band = r
    if dz != 0.0:
        z0 = (zlo - band - az) / dz
        z1 = (zhi + band - az) / dz
        if z0 > z1:
            z0, z1 = z1, z0
        lo = max(lo, z0)
        hi = min(hi, z1)
    elif az < zlo - band or az > zhi + band:
        return out
    if lo > hi:
        return out
    if mode == MODE_PLANE:
        res = np.empty((1, 2))
        res[0, 0] = lo
        res[0, 1] = hi
        return res

    # walk along the axis; g = z(t) - height(x(t)) is Lipschitz with constant L
    L = abs(dz) + hs
    step = 0.5 * h / hs
    buf = np.empty((16, 2))
    n = 0
    t = lo
    in_run = False
    run0 = 0.0
    run1 = 0.0
    while t <= hi:
        g = az + t * dz - hex_height_scalar(ax + t * dx, ay + t * dy, period)
        ag = abs(g)
        if ag <= 2.0 * r + h:
            if not in_run:
                run0 = t - step
                in_run = True
            run1 = t + step
            t += step
        else:
            if in_run:
                if n == buf.shape[0]:
                    nb = np.empty((2 * n, 2))
                    nb[:n] = buf
                    buf = nb
                buf[n, 0] = run0
                buf[n, 1] = run1
                n += 1
                in_run = False
            t += (ag - 2.0 * r) / L
    if in_run:
        if n == buf.shape[0]:
            nb = np.empty((2 * n, 2))
            nb[:n] = buf
            buf = nb
        buf[n, 0] = run0
        buf[n, 1] = run1
        n += 1
    return buf[:n]


@njit(cache=True)
def _row_extent(yj, p0x, p0y, p1x, p1y, rho):
    """x-extent of the stadium {dist(., [p0, p1]) <= rho} on the row y = yj."""
    xmin = 1e300
    xmax = -1e300
    for k in range(2):
        px = p0x if k == 0 else p1x
        py = p0y if k == 0 else p1y
        dy = yj - py
        if abs(dy) <= rho:
            w = math.sqrt(rho * rho - dy * dy)
            xmin = min(xmin, px - w)
            xmax = max(xmax, px + w)
    ex = p1x - p0x
    ey = p1y - p0y
    ln = math.hypot(ex, ey)
    if ln > 0.0:
        nx = -ey / ln * rho
        ny = ex / ln * rho
        # quadrilateral p0+n, p1+n, p1-n, p0-n
        qx0 = p0x + nx
        qy0 = p0y + ny
        qx1 = p1x + nx
        qy1 = p1y + ny
        qx2 = p1x - nx
        qy2 = p1y - ny
        qx3 = p0x - nx
        qy3 = p0y - ny
        xs = (qx0, qx1, qx2, qx3)
        ys = (qy0, qy1, qy2, qy3)
        for k in range(4):
            ax_ = xs[k]
            ay_ = ys[k]
            bx_ = xs[(k + 1) % 4]
            by_ = ys[(k + 1) % 4]
            if (ay_ - yj) * (by_ - yj) <= 0.0:
                if ay_ == by_:
                    xmin = min(xmin, min(ax_, bx_))
                    xmax = max(xmax, max(ax_, bx_))
                else:
                    s = (yj - ay_) / (by_ - ay_)
                    xx = ax_ + s * (bx_ - ax_)
                    xmin = min(xmin, xx)
                    xmax = max(xmax, xx)
    return xmin, xmax


@njit(cache=True)
def _raster_line(ax, ay, az, dx, dy, dz, r, h, mode, period, ox, oy, nx, ny,
                 cx, cy, R, zlo, zhi, dense, mask, buf, nbuf, owner):
    """Rasterise one cylinder. Writes into ``mask`` when ``dense`` else appends
    ``(owner, i, j)`` rows to ``buf``; returns the (possibly reallocated)
    buffer and its fill count."""
    iv = line_intervals(ax, ay, az, dx, dy, dz, r, h, mode, period, cx, cy, R, zlo, zhi)
    rho = r + 1e-9
    R2 = (R + 1e-9) ** 2
    for k in range(iv.shape[0]):
        t0 = iv[k, 0]
        t1 = iv[k, 1]
        p0x = ax + t0 * dx
        p0y = ay + t0 * dy
        p1x = ax + t1 * dx
        p1y = ay + t1 * dy
        ylo = min(p0y, p1y) - rho
        yhi = max(p0y, p1y) + rho
        j0 = max(0, int(math.floor((ylo - oy) / h - 0.5)))
        j1 = min(ny - 1, int(math.ceil((yhi - oy) / h - 0.5)))
        for j in range(j0, j1 + 1):
            yj = oy + (j + 0.5) * h
            xmin, xmax = _row_extent(yj, p0x, p0y, p1x, p1y, rho)
            if xmin > xmax:
                continue
            i0 = max(0, int(math.ceil((xmin - ox) / h - 0.5)))
            i1 = min(nx - 1, int(math.floor((xmax - ox) / h - 0.5)))
            for i in range(i0, i1 + 1):
                xi = ox + (i + 0.5) * h
                if (xi - cx) ** 2 + (yj - cy) ** 2 > R2:
                    continue
                if dense:
                    if mask[i, j]:
                        continue
                    if cell_in_cylinder(xi, yj, mode, period, ax, ay, az, dx, dy, dz, r):
                        mask[i, j] = True
                else:
                    if cell_in_cylinder(xi, yj, mode, period, ax, ay, az, dx, dy, dz, r):
                        if nbuf == buf.shape[0]:
                            nb = np.empty((2 * nbuf, 3), dtype=np.int64)
                            nb[:nbuf] = buf
                            buf = nb
                        buf[nbuf, 0] = owner
                        buf[nbuf, 1] = i
                        buf[nbuf, 2] = j
                        nbuf += 1
    return buf, nbuf


@njit(cache=True)
def raster_dense(A, D, r, h, mode, period, ox, oy, nx, ny, cx, cy, R, zlo, zhi, mask):
    dummy = np.empty((1, 3), dtype=np.int64)
    for k in range(A.shape[0]):
        _raster_line(A[k, 0], A[k, 1], A[k, 2], D[k, 0], D[k, 1], D[k, 2], r, h, mode,
                     period, ox, oy, nx, ny, cx, cy, R, zlo, zhi, True, mask, dummy, 0, k)


@njit(cache=True)
def raster_sparse(A, D, r, h, mode, period, ox, oy, nx, ny, cx, cy, R, zlo, zhi):
    mask = np.zeros((1, 1), dtype=np.bool_)
    buf = np.empty((1024, 3), dtype=np.int64)
    nbuf = 0
    for k in range(A.shape[0]):
        buf, nbuf = _raster_line(A[k, 0], A[k, 1], A[k, 2], D[k, 0], D[k, 1], D[k, 2], r, h,
                                 mode, period, ox, oy, nx, ny, cx, cy, R, zlo, zhi, False,
                                 mask, buf, nbuf, k)
    return buf[:nbuf]


# ---------------------------------------------------------------------------
# cell classification relative to an annulus


@njit(cache=True)
def _square_min_max(xc, yc, h, cx, cy):
    hx = 0.5 * h
    dx = abs(xc - cx)
    dy = abs(yc - cy)
    mx = max(dx - hx, 0.0)
    my = max(dy - hx, 0.0)
    Mx = dx + hx
    My = dy + hx
    return math.sqrt(mx * mx + my * my), math.sqrt(Mx * Mx + My * My)


@njit(cache=True)
def classify_cells(ox, oy, h, nx, ny, cx, cy, r_in, r_out):
    """0 = annulus interior, 1 = meets the inner disk, 2 = meets the exterior."""
    cls = np.zeros((nx, ny), dtype=np.int8)
    for i in range(nx):
        xc = ox + (i + 0.5) * h
        for j in range(ny):
            yc = oy + (j + 0.5) * h
            dmin, dmax = _square_min_max(xc, yc, h, cx, cy)
            if dmin <= r_in:
                cls[i, j] = 1
            elif dmax >= r_out:
                cls[i, j] = 2
    return cls


@njit(cache=True)
def vacant_crossing_grid(occ, cls):
    """4-connected BFS through vacant annulus cells from the inner set to the outer set.

    Inner and outer cells count as vacant whatever ``occ`` says.
    """
    nx, ny = occ.shape
    seen = np.zeros((nx, ny), dtype=np.bool_)
    qi = np.empty(nx * ny, dtype=np.int64)
    qj = np.empty(nx * ny, dtype=np.int64)
    head = 0
    tail = 0
    for i in range(nx):
        for j in range(ny):
            if cls[i, j] == 1:
                seen[i, j] = True
                qi[tail] = i
                qj[tail] = j
                tail += 1
    di = (1, -1, 0, 0)
    dj = (0, 0, 1, -1)
    while head < tail:
        i = qi[head]
        j = qj[head]
        head += 1
        for k in range(4):
            a = i + di[k]
            b = j + dj[k]
            if a < 0 or b < 0 or a >= nx or b >= ny or seen[a, b]:
                continue
            c = cls[a, b]
            if c == 2:
                return True
            if c == 0 and not occ[a, b]:
                seen[a, b] = True
                qi[tail] = a
                qj[tail] = b
                tail += 1
    return False


@njit(cache=True)
def _find(parent, pot, x):
    # returns root and the angle of x relative to the root; compresses the path
    root = x
    acc = 0.0
    while parent[root] != root:
        acc += pot[root]
        root = parent[root]
    # second pass: point every node on the path straight at the root
    y = x
    rem = acc
    while parent[y] != y:
        nxt = parent[y]
        p = pot[y]
        parent[y] = root
        pot[y] = rem
        rem -= p
        y = nxt
    return root, acc


@njit(cache=True)
def occupied_circuit_grid(occ, cls, ox, oy, h, cx, cy):
    """Is there an 8-connected loop of occupied annulus cells winding around (cx, cy)?

    Weighted union-find: each cell carries its unwrapped polar angle relative
    to its root. Closing a loop whose angle increments do not sum to zero
    means the loop winds around the center.
    """
    nx, ny = occ.shape
    n = nx * ny
    parent = np.arange(n)
    pot = np.zeros(n)
    # forward half of the 8-neighbourhood
    di = (1, 0, 1, 1)
    dj = (0, 1, 1, -1)
    for i in range(nx):
        for j in range(ny):
            if cls[i, j] != 0 or not occ[i, j]:
                continue
            a = i * ny + j
            for k in range(4):
                ii = i + di[k]
                jj = j + dj[k]
                if ii < 0 or jj < 0 or ii >= nx or jj >= ny:
                    continue
                if cls[ii, jj] != 0 or not occ[ii, jj]:
                    continue
                b = ii * ny + jj
                ta = math.atan2(oy + (j + 0.5) * h - cy, ox + (i + 0.5) * h - cx)
                tb = math.atan2(oy + (jj + 0.5) * h - cy, ox + (ii + 0.5) * h - cx)
                delta = tb - ta
                if delta > math.pi:
                    delta -= 2.0 * math.pi
                elif delta < -math.pi:
                    delta += 2.0 * math.pi
                ra, pa = _find(parent, pot, a)
                rb, pb = _find(parent, pot, b)
                if ra == rb:
                    if abs(pa + delta - pb) > math.pi:
                        return True
                else:
                    parent[rb] = ra
                    pot[rb] = pa + delta - pb
    return False


# ---------------------------------------------------------------------------
# sparse union-find over occupied cells


@njit(cache=True)
def _uf_find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def label_sparse_cells(keys, ny):
    """8-connected component labels of a sorted, de-duplicated array of cell keys
    ``i * ny + j``."""
    n = keys.shape[0]
    parent = np.arange(n)
    for a in range(n):
        k = keys[a]
        i = k // ny
        j = k - i * ny
        for di in range(-1, 2):
            for dj in range(-1, 2):
                if di < 0 or (di == 0 and dj <= 0):
                    continue
                jj = j + dj
                if jj < 0 or jj >= ny:
                    continue
                kk = (i + di) * ny + jj
                b = np.searchsorted(keys, kk)
                if b < n and keys[b] == kk:
                    ra = _uf_find(parent, a)
                    rb = _uf_find(parent, b)
                    if ra != rb:
                        parent[rb] = ra
    out = np.empty(n, dtype=np.int64)
    for a in range(n):
        out[a] = _uf_find(parent, a)
    return out
