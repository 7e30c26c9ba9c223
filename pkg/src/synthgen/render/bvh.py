"""Bounding-volume hierarchy over triangles and ray queries against it.

Nodes are stored flat. Inner nodes reference two children; leaves reference
a span of ``order`` (triangle ids sorted by the build). Splits are median
splits along the longest centroid extent, leaves hold at most ``leaf_size``
triangles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import SynthGenError

LEAF_SIZE = 4
STACK_SIZE = 128
T_MIN = 1e-9


@dataclass
class Bvh:
    node_min: np.ndarray
    node_max: np.ndarray
    left: np.ndarray     # -1 for leaves
    right: np.ndarray
    start: np.ndarray    # span into ``order`` (leaves only)
    count: np.ndarray
    order: np.ndarray
    triangles: np.ndarray  # (T, 3, 3) world-space vertices

    @property
    def n_nodes(self) -> int:
        return self.left.shape[0]

    def leaves(self) -> np.ndarray:
        return np.nonzero(self.left < 0)[0]

    def intersect(self, origins, directions, t_max: float = np.inf):
        """Closest hits for a batch of rays: ``(tri_id, t)`` with ``-1, inf`` for misses."""
        o = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
        d = np.ascontiguousarray(np.atleast_2d(directions), dtype=np.float64)
        return intersect_batch(self.node_min, self.node_max, self.left, self.right, self.start, self.count,
                               self.order, self.triangles, o, d, float(t_max))


@njit(cache=True)
def _build(tri_min, tri_max, centroid, leaf_size):
    n = centroid.shape[0]
    cap = 2 * n
    node_min = np.empty((cap, 3))
    node_max = np.empty((cap, 3))
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    count = np.zeros(cap, dtype=np.int64)
    order = np.arange(n)
    stack = np.empty((cap, 3), dtype=np.int64)
    sp = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    sp = 1
    used = 1
    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        s = stack[sp, 1]
        e = stack[sp, 2]
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for k in range(s, e):
            t = order[k]
            for a in range(3):
                lo[a] = min(lo[a], tri_min[t, a])
                hi[a] = max(hi[a], tri_max[t, a])
                clo[a] = min(clo[a], centroid[t, a])
                chi[a] = max(chi[a], centroid[t, a])
        node_min[node] = lo
        node_max[node] = hi
        ext = chi - clo
        axis = 0
        if ext[1] > ext[axis]:
            axis = 1
        if ext[2] > ext[axis]:
            axis = 2
        if e - s <= leaf_size or ext[axis] <= 0.0:
            start[node] = s
            count[node] = e - s
            continue
        keys = np.empty(e - s)
        for k in range(s, e):
            keys[k - s] = centroid[order[k], axis]
        perm = np.argsort(keys, kind="mergesort")
        seg = order[s:e].copy()
        for k in range(e - s):
            order[s + k] = seg[perm[k]]
        mid = s + (e - s) // 2
        lchild = used
        rchild = used + 1
        used += 2
        left[node] = lchild
        right[node] = rchild
        stack[sp, 0] = rchild
        stack[sp, 1] = mid
        stack[sp, 2] = e
        sp += 1
        stack[sp, 0] = lchild
        stack[sp, 1] = s
        stack[sp, 2] = mid
        sp += 1
    return node_min[:used].copy(), node_max[:used].copy(), left[:used].copy(), right[:used].copy(), \
        start[:used].copy(), count[:used].copy(), order


def build_bvh(triangles, leaf_size: int = LEAF_SIZE) -> Bvh:
    """Build a BVH over ``triangles`` of shape ``(T, 3, 3)``."""
    tris = np.ascontiguousarray(triangles, dtype=np.float64)
    if tris.ndim != 3 or tris.shape[1:] != (3, 3) or tris.shape[0] == 0:
        raise SynthGenError("build_bvh: need at least one triangle of shape (3, 3)")
    tmin = tris.min(axis=1)
    tmax = tris.max(axis=1)
    cen = tris.mean(axis=1)
    nmin, nmax, left, right, start, count, order = _build(tmin, tmax, cen, leaf_size)
    return Bvh(nmin, nmax, left, right, start, count, order, tris)


@njit(cache=True, inline="always")
def _safe_inv(x):
    if abs(x) < 1e-300:
        return 1e300 if x >= 0 else -1e300
    return 1.0 / x


@njit(cache=True, inline="always")
def ray_triangle(tris, t, ox, oy, oz, dx, dy, dz):
    """Moller-Trumbore; returns ``(t, u, v)`` with ``t = inf`` on a miss."""
    ax, ay, az = tris[t, 0, 0], tris[t, 0, 1], tris[t, 0, 2]
    e1x, e1y, e1z = tris[t, 1, 0] - ax, tris[t, 1, 1] - ay, tris[t, 1, 2] - az
    e2x, e2y, e2z = tris[t, 2, 0] - ax, tris[t, 2, 1] - ay, tris[t, 2, 2] - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return np.inf, 0.0, 0.0
    inv = 1.0 / det
    sx, sy, sz = ox - ax, oy - ay, oz - az
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf, 0.0, 0.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.inf, 0.0, 0.0
    tt = (e2x * qx + e2y * qy + e2z * qz) * inv
    return tt, u, v


@njit(cache=True, inline="always")
def _box_entry(nmin, nmax, node, ox, oy, oz, ix, iy, iz, t_max):
    t0 = (nmin[node, 0] - ox) * ix
    t1 = (nmax[node, 0] - ox) * ix
    lo = min(t0, t1)
    hi = max(t0, t1)
    t0 = (nmin[node, 1] - oy) * iy
    t1 = (nmax[node, 1] - oy) * iy
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    t0 = (nmin[node, 2] - oz) * iz
    t1 = (nmax[node, 2] - oz) * iz
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    # widen slightly so rounding never culls a grazing hit
    hi *= 1.0 + 1e-12
    if hi < max(lo, 0.0) or lo > t_max:
        return np.inf
    return lo


@njit(cache=True)
def closest_hit(nmin, nmax, left, right, start, count, order, tris, ox, oy, oz, dx, dy, dz, t_min, t_max):
    """Nearest triangle with ``t_min < t < t_max``; ties go to the lower triangle id."""
    ix, iy, iz = _safe_inv(dx), _safe_inv(dy), _safe_inv(dz)
    best_t = t_max
    best_id = -1
    best_u = 0.0
    best_v = 0.0
    stack = np.empty(STACK_SIZE, dtype=np.int64)
    sp = 0
    if _box_entry(nmin, nmax, 0, ox, oy, oz, ix, iy, iz, best_t) < np.inf:
        stack[0] = 0
        sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_entry(nmin, nmax, node, ox, oy, oz, ix, iy, iz, best_t) == np.inf:
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                t = order[k]
                tt, u, v = ray_triangle(tris, t, ox, oy, oz, dx, dy, dz)
                if tt > t_min and (tt < best_t or (tt == best_t and best_id >= 0 and t < best_id)):
                    best_t = tt
                    best_id = t
                    best_u = u
                    best_v = v
            continue
        a = left[node]
        b = right[node]
        ta = _box_entry(nmin, nmax, a, ox, oy, oz, ix, iy, iz, best_t)
        tb = _box_entry(nmin, nmax, b, ox, oy, oz, ix, iy, iz, best_t)
        # push the farther child first so the nearer one is visited next
        if ta <= tb:
            if tb < np.inf:
                stack[sp] = b
                sp += 1
            if ta < np.inf:
                stack[sp] = a
                sp += 1
        else:
            if ta < np.inf:
                stack[sp] = a
                sp += 1
            if tb < np.inf:
                stack[sp] = b
                sp += 1
    if best_id < 0:
        return -1, np.inf, 0.0, 0.0
    return best_id, best_t, best_u, best_v


@njit(cache=True)
def any_hit(nmin, nmax, left, right, start, count, order, tris, ox, oy, oz, dx, dy, dz, t_min, t_max):
    ix, iy, iz = _safe_inv(dx), _safe_inv(dy), _safe_inv(dz)
    stack = np.empty(STACK_SIZE, dtype=np.int64)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_entry(nmin, nmax, node, ox, oy, oz, ix, iy, iz, t_max) == np.inf:
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                tt, u, v = ray_triangle(tris, order[k], ox, oy, oz, dx, dy, dz)
                if t_min < tt < t_max:
                    return True
            continue
        stack[sp] = left[node]
        sp += 1
        stack[sp] = right[node]
        sp += 1
    return False


@njit(cache=True)
def intersect_batch(nmin, nmax, left, right, start, count, order, tris, origins, dirs, t_max):
    n = origins.shape[0]
    ids = np.empty(n, dtype=np.int64)
    ts = np.empty(n)
    for i in range(n):
        tid, t, _, _ = closest_hit(nmin, nmax, left, right, start, count, order, tris, origins[i, 0],
                                   origins[i, 1], origins[i, 2], dirs[i, 0], dirs[i, 1], dirs[i, 2],
                                   T_MIN, t_max)
        ids[i] = tid
        ts[i] = t
    return ids, ts
