"""Numba kernels for oriented-box rigid bodies resting on the plane z = 0.

Body state is held in flat arrays: ``pos (B,3)``, ``quat (B,4)`` as
``(w, x, y, z)``, ``half (B,3)``. Contact normals point from body ``b`` to
body ``a``; ``b == -1`` is the ground plane.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_EPS_AXIS = 1e-9


@njit(cache=True)
def quat_to_matrix(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    m = np.empty((3, 3))
    m[0, 0] = 1 - 2 * (y * y + z * z)
    m[0, 1] = 2 * (x * y - w * z)
    m[0, 2] = 2 * (x * z + w * y)
    m[1, 0] = 2 * (x * y + w * z)
    m[1, 1] = 1 - 2 * (x * x + z * z)
    m[1, 2] = 2 * (y * z - w * x)
    m[2, 0] = 2 * (x * z - w * y)
    m[2, 1] = 2 * (y * z + w * x)
    m[2, 2] = 1 - 2 * (x * x + y * y)
    return m


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def _radius(R, h, axis):
    return (h[0] * abs(R[0, 0] * axis[0] + R[1, 0] * axis[1] + R[2, 0] * axis[2])
            + h[1] * abs(R[0, 1] * axis[0] + R[1, 1] * axis[1] + R[2, 1] * axis[2])
            + h[2] * abs(R[0, 2] * axis[0] + R[1, 2] * axis[1] + R[2, 2] * axis[2]))


@njit(cache=True)
def obb_separation(pa, Ra, ha, pb, Rb, hb):
    """Largest separation over the 15 SAT axes (negative = penetration depth).

    Returns ``(sep, axis, kind, i, j)`` where ``axis`` points from b to a and
    ``kind`` is 0 (face of a), 1 (face of b) or 2 (edge i of a x edge j of b).
    """
    d = pa - pb
    best_face = -1e300
    face_axis = np.zeros(3)
    face_kind = 0
    face_i = 0
    for k in range(6):
        ax = np.empty(3)
        if k < 3:
            ax[0] = Ra[0, k]
            ax[1] = Ra[1, k]
            ax[2] = Ra[2, k]
        else:
            ax[0] = Rb[0, k - 3]
            ax[1] = Rb[1, k - 3]
            ax[2] = Rb[2, k - 3]
        proj = _dot(d, ax)
        sep = abs(proj) - _radius(Ra, ha, ax) - _radius(Rb, hb, ax)
        if sep > best_face:
            best_face = sep
            if proj < 0:
                ax = -ax
            face_axis = ax
            face_kind = 0 if k < 3 else 1
            face_i = k if k < 3 else k - 3
    best_edge = -1e300
    edge_axis = np.zeros(3)
    edge_i = -1
    edge_j = -1
    for i in range(3):
        for j in range(3):
            ax = _cross(Ra[:, i], Rb[:, j])
            n = math.sqrt(_dot(ax, ax))
            if n < _EPS_AXIS:
                continue
            ax = ax / n
            proj = _dot(d, ax)
            sep = abs(proj) - _radius(Ra, ha, ax) - _radius(Rb, hb, ax)
            if sep > best_edge:
                best_edge = sep
                if proj < 0:
                    ax = -ax
                edge_axis = ax
                edge_i = i
                edge_j = j
    # an edge axis is only chosen when clearly better than every face axis
    scale = min(ha.min(), hb.min())
    if edge_i >= 0 and best_edge > 0.95 * best_face + 0.01 * scale and best_edge > best_face:
        return best_edge, edge_axis, 2, edge_i, edge_j
    return best_face, face_axis, face_kind, face_i, -1


@njit(cache=True)
def sat_depth(pa, Ra, ha, pb, Rb, hb):
    """Penetration depth: the minimum overlap over all 15 axes (<= 0 when separated)."""
    sep, _, _, _, _ = obb_separation_all(pa, Ra, ha, pb, Rb, hb)
    return -sep


@njit(cache=True)
def obb_separation_all(pa, Ra, ha, pb, Rb, hb):
    """Plain max-separation over all 15 axes without the face preference."""
    d = pa - pb
    best = -1e300
    best_ax = np.zeros(3)
    for k in range(15):
        if k < 3:
            ax = Ra[:, k].copy()
        elif k < 6:
            ax = Rb[:, k - 3].copy()
        else:
            ax = _cross(Ra[:, (k - 6) // 3], Rb[:, (k - 6) % 3])
            n = math.sqrt(_dot(ax, ax))
            if n < _EPS_AXIS:
                continue
            ax = ax / n
        proj = _dot(d, ax)
        sep = abs(proj) - _radius(Ra, ha, ax) - _radius(Rb, hb, ax)
        if sep > best:
            best = sep
            best_ax = ax if proj >= 0 else -ax
    return best, best_ax, 0, 0, 0


@njit(cache=True)
def _clip(poly, count, axis, limit):
    """Keep the part of polygon with dot(p, axis) <= limit (Sutherland-Hodgman)."""
    out = np.empty((16, 3))
    n_out = 0
    if count == 0:
        return out, 0
    prev = poly[count - 1]
    prev_d = _dot(prev, axis) - limit
    for i in range(count):
        cur = poly[i]
        cur_d = _dot(cur, axis) - limit
        if prev_d <= 0.0:
            if n_out < 16:
                out[n_out] = prev
                n_out += 1
            if cur_d > 0.0:
                t = prev_d / (prev_d - cur_d)
                if n_out < 16:
                    out[n_out] = prev + t * (cur - prev)
                    n_out += 1
        elif cur_d <= 0.0:
            t = prev_d / (prev_d - cur_d)
            if n_out < 16:
                out[n_out] = prev + t * (cur - prev)
                n_out += 1
        prev = cur
        prev_d = cur_d
    return out, n_out


@njit(cache=True)
def box_box_contacts(pa, Ra, ha, pb, Rb, hb, margin, out_p, out_n, out_sep, start):
    """Append contacts between boxes a and b; returns the number written."""
    sep, axis, kind, ei, ej = obb_separation(pa, Ra, ha, pb, Rb, hb)
    if sep > margin:
        return 0
    written = 0
    if kind == 2:
        # closest points between the supporting edges
        ca = pa.copy()
        for k in range(3):
            if k != ei:
                s = 1.0 if _dot(Ra[:, k], axis) < 0 else -1.0
                ca += s * ha[k] * Ra[:, k]
        cb = pb.copy()
        for k in range(3):
            if k != ej:
                s = 1.0 if _dot(Rb[:, k], axis) > 0 else -1.0
                cb += s * hb[k] * Rb[:, k]
        ua = Ra[:, ei]
        ub = Rb[:, ej]
        w0 = ca - cb
        b = _dot(ua, ub)
        dd = _dot(ua, w0)
        e = _dot(ub, w0)
        denom = 1.0 - b * b
        if denom < 1e-12:
            ta = 0.0
            tb = e
        else:
            ta = (b * e - dd) / denom
            tb = (e - b * dd) / denom
        ta = min(max(ta, -ha[ei]), ha[ei])
        tb = min(max(tb, -hb[ej]), hb[ej])
        p = 0.5 * (ca + ta * ua + cb + tb * ub)
        out_p[start] = p
        out_n[start] = axis
        out_sep[start] = sep
        return 1
    # face contact: reference box r, incident box c
    if kind == 0:
        pr, Rr, hr, pc, Rc, hc = pa, Ra, ha, pb, Rb, hb
        nref = -axis  # outward from a towards b
    else:
        pr, Rr, hr, pc, Rc, hc = pb, Rb, hb, pa, Ra, ha
        nref = axis  # outward from b towards a
    fi = ei
    # incident face: most anti-parallel to nref
    best = 1e300
    inc = 0
    inc_sign = 1.0
    for k in range(3):
        dk = _dot(Rc[:, k], nref)
        if dk < best:
            best = dk
            inc = k
            inc_sign = 1.0
        if -dk < best:
            best = -dk
            inc = k
            inc_sign = -1.0
    center = pc + inc_sign * hc[inc] * Rc[:, inc]
    u = (inc + 1) % 3
    v = (inc + 2) % 3
    poly = np.empty((16, 3))
    poly[0] = center + hc[u] * Rc[:, u] + hc[v] * Rc[:, v]
    poly[1] = center - hc[u] * Rc[:, u] + hc[v] * Rc[:, v]
    poly[2] = center - hc[u] * Rc[:, u] - hc[v] * Rc[:, v]
    poly[3] = center + hc[u] * Rc[:, u] - hc[v] * Rc[:, v]
    count = 4
    for k in range(3):
        if k == fi:
            continue
        ax = Rr[:, k].copy()
        off = _dot(pr, ax)
        poly, count = _clip(poly, count, ax, off + hr[k])
        poly, count = _clip(poly, count, -ax, -off + hr[k])
    ref_offset = _dot(pr, nref) + hr[fi]
    normal = axis
    for i in range(count):
        s = _dot(poly[i], nref) - ref_offset
        if s <= margin:
            if written >= 8:
                break
            out_p[start + written] = poly[i] - 0.5 * s * nref
            out_n[start + written] = normal
            out_sep[start + written] = s
            written += 1
    return written


@njit(cache=True)
def _world_inv_inertia(R, inv_i):
    m = np.zeros((3, 3))
    for r in range(3):
        for c in range(3):
            acc = 0.0
            for k in range(3):
                acc += R[r, k] * inv_i[k] * R[c, k]
            m[r, c] = acc
    return m


@njit(cache=True)
def _matvec(M, v):
    out = np.empty(3)
    for r in range(3):
        out[r] = M[r, 0] * v[0] + M[r, 1] * v[1] + M[r, 2] * v[2]
    return out


@njit(cache=True)
def _tangent_basis(n):
    if abs(n[0]) > 0.57735:
        t1 = np.array([n[1], -n[0], 0.0])
    else:
        t1 = np.array([0.0, n[2], -n[1]])
    t1 = t1 / math.sqrt(_dot(t1, t1))
    t2 = _cross(n, t1)
    return t1, t2


@njit(cache=True)
def plane_contacts(p, R, h, margin, out_p, out_n, out_sep, start):
    written = 0
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                c = p + sx * h[0] * R[:, 0] + sy * h[1] * R[:, 1] + sz * h[2] * R[:, 2]
                if c[2] <= margin:
                    out_p[start + written] = c
                    out_n[start + written, 0] = 0.0
                    out_n[start + written, 1] = 0.0
                    out_n[start + written, 2] = 1.0
                    out_sep[start + written] = c[2]
                    written += 1
    return written


@njit(cache=True)
def _apply(vel, omega, inv_mass, a, b, d, ia, ib, dl):
    for k in range(3):
        vel[a, k] += inv_mass[a] * dl * d[k]
        omega[a, k] += dl * ia[k]
    if b >= 0:
        for k in range(3):
            vel[b, k] -= inv_mass[b] * dl * d[k]
            omega[b, k] -= dl * ib[k]


@njit(cache=True)
def _rel_speed(vel, omega, a, b, d, ja, jb):
    v = 0.0
    for k in range(3):
        v += d[k] * vel[a, k] + ja[k] * omega[a, k]
    if b >= 0:
        for k in range(3):
            v -= d[k] * vel[b, k] + jb[k] * omega[b, k]
    return v


@njit(cache=True)
def settle_bodies(pos, quat, vel, omega, half, inv_mass, inv_inertia, active, use_plane,
                  gravity, dt, max_steps, rest_threshold, restitution, friction,
                  iterations, slop, beta, margin, rest_steps):
    """Integrate until every active body is at rest or ``max_steps`` is reached.

    Semi-implicit Euler with sequential impulses (normal + two friction
    directions), warm started from the previous step, and Baumgarte
    positional bias. Contacts closer than ``margin`` are speculative.
    Arrays are updated in place. Returns ``(steps_taken, converged)``.
    """
    nb = pos.shape[0]
    max_contacts = 8 * nb + 8 * nb * nb
    cp = np.zeros((max_contacts, 3))
    cn = np.zeros((max_contacts, 3))
    cs = np.zeros(max_contacts)
    ca = np.zeros(max_contacts, dtype=np.int64)
    cb = np.zeros(max_contacts, dtype=np.int64)
    # per contact and direction (normal, tangent 1, tangent 2)
    dirs = np.zeros((max_contacts, 3, 3))
    ja = np.zeros((max_contacts, 3, 3))
    jb = np.zeros((max_contacts, 3, 3))
    ia = np.zeros((max_contacts, 3, 3))
    ib = np.zeros((max_contacts, 3, 3))
    keff = np.zeros((max_contacts, 3))
    lam = np.zeros((max_contacts, 3))
    target = np.zeros(max_contacts)
    # previous step, for warm starting
    prev_p = np.zeros((max_contacts, 3))
    prev_a = np.zeros(max_contacts, dtype=np.int64)
    prev_b = np.zeros(max_contacts, dtype=np.int64)
    prev_lam = np.zeros((max_contacts, 3))
    n_prev = 0
    rot = np.zeros((nb, 3, 3))
    iw = np.zeros((nb, 3, 3))
    quiet = 0
    steps = 0
    any_active = False
    for i in range(nb):
        if active[i]:
            any_active = True
    if not any_active:
        return 0, True
    match_r2 = (0.1 * margin) ** 2
    for step in range(max_steps):
        steps = step + 1
        for i in range(nb):
            rot[i] = quat_to_matrix(quat[i])
            if active[i]:
                iw[i] = _world_inv_inertia(rot[i], inv_inertia[i])
                vel[i, 2] -= gravity * dt
            else:
                iw[i] = 0.0
        nc = 0
        for i in range(nb):
            if not active[i]:
                continue
            if use_plane:
                k = plane_contacts(pos[i], rot[i], half[i], margin, cp, cn, cs, nc)
                for c in range(nc, nc + k):
                    ca[c] = i
                    cb[c] = -1
                nc += k
            for j in range(nb):
                if j == i or (active[j] and j < i):
                    continue
                dx = pos[i] - pos[j]
                rsum = math.sqrt(_dot(half[i], half[i])) + math.sqrt(_dot(half[j], half[j])) + margin
                if _dot(dx, dx) > rsum * rsum:
                    continue
                k = box_box_contacts(pos[i], rot[i], half[i], pos[j], rot[j], half[j], margin, cp, cn, cs, nc)
                for c in range(nc, nc + k):
                    ca[c] = i
                    cb[c] = j
                nc += k
        # precompute Jacobians, effective masses and velocity targets
        for c in range(nc):
            a = ca[c]
            b = cb[c]
            n = cn[c]
            t1, t2 = _tangent_basis(n)
            ra = cp[c] - pos[a]
            rb = cp[c] - pos[b] if b >= 0 else np.zeros(3)
            for m in range(3):
                d = n if m == 0 else (t1 if m == 1 else t2)
                dirs[c, m] = d
                jam = _cross(ra, d)
                ja[c, m] = jam
                ia[c, m] = _matvec(iw[a], jam)
                k_ = inv_mass[a] + _dot(jam, ia[c, m])
                if b >= 0:
                    jbm = _cross(rb, d)
                    jb[c, m] = jbm
                    ib[c, m] = _matvec(iw[b], jbm)
                    k_ += inv_mass[b] + _dot(jbm, ib[c, m])
                else:
                    jb[c, m] = 0.0
                    ib[c, m] = 0.0
                keff[c, m] = k_
            sep = cs[c]
            if sep > 0.0:
                tg = -sep / dt
            else:
                tg = beta * max(-sep - slop, 0.0) / dt
            if restitution > 0.0:
                vn0 = _rel_speed(vel, omega, a, b, dirs[c, 0], ja[c, 0], jb[c, 0])
                if vn0 < -0.2:
                    tg = max(tg, -restitution * vn0)
            target[c] = tg
            lam[c, 0] = 0.0
            lam[c, 1] = 0.0
            lam[c, 2] = 0.0
            for q in range(n_prev):
                if prev_a[q] == a and prev_b[q] == b:
                    dp = cp[c] - prev_p[q]
                    if _dot(dp, dp) < match_r2:
                        for m in range(3):
                            lam[c, m] = prev_lam[q, m]
                        break
            for m in range(3):
                if lam[c, m] != 0.0:
                    _apply(vel, omega, inv_mass, a, b, dirs[c, m], ia[c, m], ib[c, m], lam[c, m])
        for it in range(iterations):
            for c in range(nc):
                a = ca[c]
                b = cb[c]
                if keff[c, 0] <= 0.0:
                    continue
                vn = _rel_speed(vel, omega, a, b, dirs[c, 0], ja[c, 0], jb[c, 0])
                old = lam[c, 0]
                lam[c, 0] = max(old + (target[c] - vn) / keff[c, 0], 0.0)
                dl = lam[c, 0] - old
                if dl != 0.0:
                    _apply(vel, omega, inv_mass, a, b, dirs[c, 0], ia[c, 0], ib[c, 0], dl)
                limit = friction * lam[c, 0]
                for m in range(1, 3):
                    if keff[c, m] <= 0.0:
                        continue
                    vt = _rel_speed(vel, omega, a, b, dirs[c, m], ja[c, m], jb[c, m])
                    old = lam[c, m]
                    lam[c, m] = min(max(old - vt / keff[c, m], -limit), limit)
                    dl = lam[c, m] - old
                    if dl != 0.0:
                        _apply(vel, omega, inv_mass, a, b, dirs[c, m], ia[c, m], ib[c, m], dl)
        for c in range(nc):
            prev_p[c] = cp[c]
            prev_a[c] = ca[c]
            prev_b[c] = cb[c]
            for m in range(3):
                prev_lam[c, m] = lam[c, m]
        n_prev = nc
        # integrate and test for rest
        fastest = 0.0
        for i in range(nb):
            if not active[i]:
                continue
            for k in range(3):
                pos[i, k] += dt * vel[i, k]
            w = omega[i]
            q = quat[i]
            dq0 = 0.5 * dt * (-w[0] * q[1] - w[1] * q[2] - w[2] * q[3])
            dq1 = 0.5 * dt * (w[0] * q[0] + w[1] * q[3] - w[2] * q[2])
            dq2 = 0.5 * dt * (-w[0] * q[3] + w[1] * q[0] + w[2] * q[1])
            dq3 = 0.5 * dt * (w[0] * q[2] - w[1] * q[1] + w[2] * q[0])
            q[0] += dq0
            q[1] += dq1
            q[2] += dq2
            q[3] += dq3
            qn = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
            for k in range(4):
                q[k] /= qn
            lin = math.sqrt(_dot(vel[i], vel[i]))
            ang = math.sqrt(_dot(w, w)) * math.sqrt(_dot(half[i], half[i]))
            fastest = max(fastest, lin, ang)
        if fastest < rest_threshold:
            quiet += 1
            if quiet >= rest_steps:
                return steps, True
        else:
            quiet = 0
    return steps, False



@njit(cache=True)
def resolve_penetrations(pos, quat, half, active, use_plane, tolerance, max_iter):
    """Translate active bodies until no overlap exceeds ``tolerance``.

    Returns the largest remaining penetration depth.
    """
    nb = pos.shape[0]
    target = 0.25 * tolerance
    worst = 0.0
    for it in range(max_iter):
        worst = 0.0
        for i in range(nb):
            if not active[i]:
                continue
            R = quat_to_matrix(quat[i])
            if use_plane:
                low = pos[i, 2] - _radius(R, half[i], np.array([0.0, 0.0, 1.0]))
                if -low > worst:
                    worst = -low
                if low < -target:
                    pos[i, 2] += -low
        for i in range(nb):
            Ri = quat_to_matrix(quat[i])
            for j in range(i + 1, nb):
                if not (active[i] or active[j]):
                    continue
                Rj = quat_to_matrix(quat[j])
                sep, axis, _, _, _ = obb_separation_all(pos[i], Ri, half[i], pos[j], Rj, half[j])
                depth = -sep
                if depth > worst:
                    worst = depth
                if depth > target:
                    push = depth + 0.5 * target
                    if use_plane and axis[2] < -0.5 and active[i] and active[j]:
                        # keep the lower body on the floor, lift the upper one
                        pos[j, :] -= push * axis
                    elif active[i] and active[j]:
                        pos[i, :] += 0.5 * push * axis
                        pos[j, :] -= 0.5 * push * axis
                    elif active[i]:
                        pos[i, :] += push * axis
                    else:
                        pos[j, :] -= push * axis
        if worst <= target:
            break
    return worst
