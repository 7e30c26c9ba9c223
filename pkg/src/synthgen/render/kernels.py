"""Numba path-tracing kernels.

Radiance transport is unidirectional path tracing with next-event
estimation towards one uniformly chosen rectangular area light and towards
non-constant environments, combined with BSDF sampling by the power
heuristic.
Area lights are one-sided, never occlude and are invisible to camera rays.

Every random number is a hash of ``(seed, pixel, sample, dimension)`` so the
image does not depend on tile order or thread count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .bvh import any_hit, closest_hit

INV_PI = 1.0 / math.pi
RAY_EPS = 1e-6
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_G = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53

# dimensions consumed per sample: 4 for the camera, then a block per bounce
DIM_CAMERA = 4
DIM_BOUNCE = 12


# ---------------------------------------------------------------- random numbers


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def sample_key(seed, pixel, sample):
    h = mix64(seed ^ (np.uint64(pixel) * _G))
    return mix64(h ^ (np.uint64(sample) * _M1))


@njit(cache=True, inline="always")
def rand(key, dim):
    return float(mix64(key ^ (np.uint64(dim + 1) * _M2)) >> _S11) * _TO_UNIT


# ---------------------------------------------------------------- small vector helpers


@njit(cache=True, inline="always")
def _norm3(x, y, z):
    n = math.sqrt(x * x + y * y + z * z)
    if n == 0.0:
        return 0.0, 0.0, 0.0
    return x / n, y / n, z / n


@njit(cache=True, inline="always")
def _frame(nx, ny, nz):
    """Orthonormal tangent frame around a unit normal (branchless variant)."""
    sign = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (sign + nz)
    b = nx * ny * a
    return (1.0 + sign * nx * nx * a, sign * b, -sign * nx), (b, sign + ny * ny * a, -ny)


@njit(cache=True, inline="always")
def _luma(r, g, b):
    return 0.2126 * r + 0.7152 * g + 0.0722 * b


@njit(cache=True, inline="always")
def power_heuristic(a, b):
    a2 = a * a
    b2 = b * b
    if a2 + b2 == 0.0:
        return 0.0
    return a2 / (a2 + b2)


# ---------------------------------------------------------------- environment


@njit(cache=True)
def env_lookup(env, ex, ey, ez):
    h = env.shape[0]
    w = env.shape[1]
    theta = math.acos(min(max(ez, -1.0), 1.0))
    phi = math.atan2(ey, ex)
    if phi < 0.0:
        phi += 2.0 * math.pi
    row = min(int(theta / math.pi * h), h - 1)
    col = min(int(phi / (2.0 * math.pi) * w), w - 1)
    return row, col


@njit(cache=True)
def env_radiance(env, env_on, dx, dy, dz):
    if not env_on:
        return 0.0, 0.0, 0.0
    r, c = env_lookup(env, dx, dy, dz)
    return env[r, c, 0], env[r, c, 1], env[r, c, 2]


@njit(cache=True)
def env_pdf(env, env_on, env_uniform, marg_pdf, cond_pdf, dx, dy, dz):
    """Solid-angle density of the environment sampler for direction ``d``."""
    if not env_on:
        return 0.0
    if env_uniform:
        return 0.25 * INV_PI
    h = env.shape[0]
    w = env.shape[1]
    r, c = env_lookup(env, dx, dy, dz)
    sin_t = math.sqrt(max(0.0, 1.0 - dz * dz))
    if sin_t <= 0.0:
        return 0.0
    p = marg_pdf[r] * cond_pdf[r, c]
    return p * h * w / (2.0 * math.pi * math.pi * sin_t)


@njit(cache=True)
def _search(cdf, u):
    lo = 0
    hi = cdf.shape[0] - 2
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid + 1] <= u:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def env_sample(env, env_uniform, marg_cdf, cond_cdf, u1, u2, u3, u4):
    """Direction drawn from the luminance x sin(theta) texel distribution."""
    if env_uniform:
        z = 1.0 - 2.0 * u1
        s = math.sqrt(max(0.0, 1.0 - z * z))
        phi = 2.0 * math.pi * u2
        return s * math.cos(phi), s * math.sin(phi), z
    h = env.shape[0]
    w = env.shape[1]
    r = _search(marg_cdf, u1)
    c = _search(cond_cdf[r], u2)
    theta = math.pi * (r + u3) / h
    phi = 2.0 * math.pi * (c + u4) / w
    st = math.sin(theta)
    return st * math.cos(phi), st * math.sin(phi), math.cos(theta)


# ---------------------------------------------------------------- material


@njit(cache=True)
def _ggx_d(alpha, cos_h):
    a2 = alpha * alpha
    d = cos_h * cos_h * (a2 - 1.0) + 1.0
    return a2 / (math.pi * d * d)


@njit(cache=True)
def _smith_g1(alpha, c):
    a2 = alpha * alpha
    return 2.0 * c / (c + math.sqrt(a2 + (1.0 - a2) * c * c))


@njit(cache=True)
def bsdf_eval(br, bg, bb, alpha, metallic, f0r, f0g, f0b, f90, p_spec,
              wo_n, wi_n, wo_h, n_h):
    """``f * cos(wi)`` and the sampling density for one direction pair.

    Arguments are cosines against the shading normal (``*_n``) and the half
    vector; returns ``(fr, fg, fb, pdf)``.
    """
    if wi_n <= 0.0 or wo_n <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    kd = (1.0 - metallic) * INV_PI
    fr = kd * br * wi_n
    fg = kd * bg * wi_n
    fb = kd * bb * wi_n
    pdf = (1.0 - p_spec) * wi_n * INV_PI
    if p_spec > 0.0 and wo_h > 0.0:
        d = _ggx_d(alpha, n_h)
        g = _smith_g1(alpha, wo_n) * _smith_g1(alpha, wi_n)
        s = (1.0 - wo_h) ** 5
        spec = d * g / (4.0 * wo_n)
        fr += spec * (f0r + (f90 - f0r) * s)
        fg += spec * (f0g + (f90 - f0g) * s)
        fb += spec * (f0b + (f90 - f0b) * s)
        pdf += p_spec * d * n_h / (4.0 * wo_h)
    return fr, fg, fb, pdf


# ---------------------------------------------------------------- lights


@njit(cache=True)
def light_hits(lc, lu, lv, ln, ox, oy, oz, dx, dy, dz, t_max, j):
    """Distance along the ray to light ``j`` (front side only) or inf."""
    denom = dx * ln[j, 0] + dy * ln[j, 1] + dz * ln[j, 2]
    if denom >= 0.0:
        return np.inf
    t = ((lc[j, 0] - ox) * ln[j, 0] + (lc[j, 1] - oy) * ln[j, 1] + (lc[j, 2] - oz) * ln[j, 2]) / denom
    if t <= RAY_EPS or t >= t_max:
        return np.inf
    px = ox + t * dx - lc[j, 0]
    py = oy + t * dy - lc[j, 1]
    pz = oz + t * dz - lc[j, 2]
    uu = lu[j, 0] * lu[j, 0] + lu[j, 1] * lu[j, 1] + lu[j, 2] * lu[j, 2]
    vv = lv[j, 0] * lv[j, 0] + lv[j, 1] * lv[j, 1] + lv[j, 2] * lv[j, 2]
    a = (px * lu[j, 0] + py * lu[j, 1] + pz * lu[j, 2]) / uu
    b = (px * lv[j, 0] + py * lv[j, 1] + pz * lv[j, 2]) / vv
    if abs(a) > 1.0 or abs(b) > 1.0:
        return np.inf
    return t


# ---------------------------------------------------------------- shading point


@njit(cache=True)
def _texture(tex_data, tex_off, tex_w, tex_h, tid, u, v):
    w = tex_w[tid]
    h = tex_h[tid]
    uu = u - math.floor(u)
    vv = v - math.floor(v)
    col = min(int(uu * w), w - 1)
    row = min(int((1.0 - vv) * h), h - 1)
    base = tex_off[tid] + 3 * (row * w + col)
    return tex_data[base], tex_data[base + 1], tex_data[base + 2]


@njit(cache=True)
def shade_point(tri_v, tri_n, tri_uv, tri_mat, tid, u, v, dx, dy, dz):
    """Geometric and shading normals, both facing against the incoming ray, plus uv."""
    ax = tri_v[tid, 1, 0] - tri_v[tid, 0, 0]
    ay = tri_v[tid, 1, 1] - tri_v[tid, 0, 1]
    az = tri_v[tid, 1, 2] - tri_v[tid, 0, 2]
    bx = tri_v[tid, 2, 0] - tri_v[tid, 0, 0]
    by = tri_v[tid, 2, 1] - tri_v[tid, 0, 1]
    bz = tri_v[tid, 2, 2] - tri_v[tid, 0, 2]
    gx, gy, gz = _norm3(ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx)
    w0 = 1.0 - u - v
    sx = w0 * tri_n[tid, 0, 0] + u * tri_n[tid, 1, 0] + v * tri_n[tid, 2, 0]
    sy = w0 * tri_n[tid, 0, 1] + u * tri_n[tid, 1, 1] + v * tri_n[tid, 2, 1]
    sz = w0 * tri_n[tid, 0, 2] + u * tri_n[tid, 1, 2] + v * tri_n[tid, 2, 2]
    sx, sy, sz = _norm3(sx, sy, sz)
    if gx * dx + gy * dy + gz * dz > 0.0:
        gx, gy, gz = -gx, -gy, -gz
    if sx * gx + sy * gy + sz * gz <= 0.0:
        if sx * gx + sy * gy + sz * gz < 0.0:
            sx, sy, sz = -sx, -sy, -sz
        else:
            sx, sy, sz = gx, gy, gz
    tu = w0 * tri_uv[tid, 0, 0] + u * tri_uv[tid, 1, 0] + v * tri_uv[tid, 2, 0]
    tv = w0 * tri_uv[tid, 0, 1] + u * tri_uv[tid, 1, 1] + v * tri_uv[tid, 2, 1]
    return gx, gy, gz, sx, sy, sz, tu, tv


# ---------------------------------------------------------------- camera


@njit(cache=True)
def camera_ray(cam_pos, cam_rot, fx, fy, cx, cy, px, py, lens_r, focus, l1, l2):
    xc = (px - cx) / fx
    yc = (py - cy) / fy
    dx, dy, dz = _norm3(xc, yc, 1.0)
    ox, oy = 0.0, 0.0  # lens lies in the camera z = 0 plane
    if lens_r > 0.0:
        # thin lens: aim at the point of the pinhole ray on the focal plane
        fpx, fpy, fpz = dx * focus / dz, dy * focus / dz, focus
        r = lens_r * math.sqrt(l1)
        phi = 2.0 * math.pi * l2
        ox, oy = r * math.cos(phi), r * math.sin(phi)
        dx, dy, dz = _norm3(fpx - ox, fpy - oy, fpz)
    wx = cam_rot[0, 0] * dx + cam_rot[0, 1] * dy + cam_rot[0, 2] * dz
    wy = cam_rot[1, 0] * dx + cam_rot[1, 1] * dy + cam_rot[1, 2] * dz
    wz = cam_rot[2, 0] * dx + cam_rot[2, 1] * dy + cam_rot[2, 2] * dz
    wox = cam_pos[0] + cam_rot[0, 0] * ox + cam_rot[0, 1] * oy
    woy = cam_pos[1] + cam_rot[1, 0] * ox + cam_rot[1, 1] * oy
    woz = cam_pos[2] + cam_rot[2, 0] * ox + cam_rot[2, 1] * oy
    return wox, woy, woz, wx, wy, wz, dz


# ---------------------------------------------------------------- geometric passes


@njit(cache=True, parallel=True)
def render_passes(nmin, nmax, left, right, start, count, order, tri_v, tri_n, tri_uv, tri_mat, tri_inst,
                  tri_cat, cam_pos, cam_rot, fx, fy, cx, cy, width, height, depth, normal, inst, sem):
    """Depth, normal, instance and semantic ids from the pixel-centre pinhole ray."""
    for row in prange(height):
        for col in range(width):
            ox, oy, oz, dx, dy, dz, zc = camera_ray(cam_pos, cam_rot, fx, fy, cx, cy, col + 0.5, row + 0.5,
                                                    0.0, 1.0, 0.0, 0.0)
            tid, t, u, v = closest_hit(nmin, nmax, left, right, start, count, order, tri_v, ox, oy, oz,
                                       dx, dy, dz, 0.0, np.inf)
            if tid < 0:
                depth[row, col] = np.inf
                normal[row, col, 0] = 0.0
                normal[row, col, 1] = 0.0
                normal[row, col, 2] = 0.0
                inst[row, col] = 0
                sem[row, col] = 0
                continue
            _, _, _, sx, sy, sz, _, _ = shade_point(tri_v, tri_n, tri_uv, tri_mat, tid, u, v, dx, dy, dz)
            depth[row, col] = t * zc
            normal[row, col, 0] = sx
            normal[row, col, 1] = sy
            normal[row, col, 2] = sz
            inst[row, col] = tri_inst[tid]
            sem[row, col] = tri_cat[tid]


# ---------------------------------------------------------------- radiance


@njit(cache=True)
def trace_sample(key, nmin, nmax, left, right, start, count, order, tri_v, tri_n, tri_uv, tri_mat,
                 mat_base, mat_rough, mat_metal, mat_spec, mat_tex, tex_data, tex_off, tex_w, tex_h,
                 lc, lu, lv, ln, lrad, larea, env, env_on, env_uniform, marg_cdf, cond_cdf, marg_pdf, cond_pdf,
                 ox, oy, oz, dx, dy, dz, max_depth):
    nl = lc.shape[0]
    lr = 0.0
    lg = 0.0
    lb = 0.0
    tr = 1.0
    tg = 1.0
    tb = 1.0
    pdf_prev = 0.0
    for bounce in range(max_depth + 1):
        tid, t, u, v = closest_hit(nmin, nmax, left, right, start, count, order, tri_v, ox, oy, oz,
                                   dx, dy, dz, 0.0, np.inf)
        if bounce > 0 and nl > 0:
            for j in range(nl):
                tl = light_hits(lc, lu, lv, ln, ox, oy, oz, dx, dy, dz, t, j)
                if tl < np.inf:
                    cos_l = -(dx * ln[j, 0] + dy * ln[j, 1] + dz * ln[j, 2])
                    p_l = tl * tl / (cos_l * larea[j] * nl)
                    w = power_heuristic(pdf_prev, p_l)
                    lr += tr * lrad[j, 0] * w
                    lg += tg * lrad[j, 1] * w
                    lb += tb * lrad[j, 2] * w
        if tid < 0:
            er, eg, eb = env_radiance(env, env_on, dx, dy, dz)
            if bounce == 0 or env_uniform:
                w = 1.0
            else:
                w = power_heuristic(pdf_prev, env_pdf(env, env_on, env_uniform, marg_pdf, cond_pdf, dx, dy, dz))
            lr += tr * er * w
            lg += tg * eg * w
            lb += tb * eb * w
            break
        if bounce == max_depth:
            break
        base = DIM_CAMERA + DIM_BOUNCE * bounce
        gx, gy, gz, nx, ny, nz, tu, tv = shade_point(tri_v, tri_n, tri_uv, tri_mat, tid, u, v, dx, dy, dz)
        px = ox + t * dx + RAY_EPS * gx * (1.0 + abs(ox + t * dx))
        py = oy + t * dy + RAY_EPS * gy * (1.0 + abs(oy + t * dy))
        pz = oz + t * dz + RAY_EPS * gz * (1.0 + abs(oz + t * dz))
        m = tri_mat[tid]
        br, bg, bb = mat_base[m, 0], mat_base[m, 1], mat_base[m, 2]
        if mat_tex[m] >= 0:
            xr, xg, xb = _texture(tex_data, tex_off, tex_w, tex_h, mat_tex[m], tu, tv)
            br *= xr
            bg *= xg
            bb *= xb
        metal = mat_metal[m]
        rough = mat_rough[m]
        alpha = max(rough * rough, 1e-3)
        f0d = 0.08 * mat_spec[m]
        f0r = f0d + (br - f0d) * metal
        f0g = f0d + (bg - f0d) * metal
        f0b = f0d + (bb - f0d) * metal
        f90 = min(1.0, 50.0 * max(f0r, max(f0g, f0b)))
        e_spec = _luma(f0r, f0g, f0b) + 0.1 * f90
        e_diff = _luma(br, bg, bb) * (1.0 - metal)
        if f90 <= 0.0:
            p_spec = 0.0
        elif e_diff <= 0.0:
            p_spec = 1.0
        else:
            p_spec = min(max(e_spec / (e_spec + e_diff), 0.1), 0.9)
        wox, woy, woz = -dx, -dy, -dz
        wo_n = wox * nx + woy * ny + woz * nz
        if wo_n <= 0.0:
            break
        # next-event estimation: one area light
        if nl > 0:
            j = min(int(rand(key, base) * nl), nl - 1)
            a1 = 2.0 * rand(key, base + 1) - 1.0
            a2 = 2.0 * rand(key, base + 2) - 1.0
            qx = lc[j, 0] + a1 * lu[j, 0] + a2 * lv[j, 0] - px
            qy = lc[j, 1] + a1 * lu[j, 1] + a2 * lv[j, 1] - py
            qz = lc[j, 2] + a1 * lu[j, 2] + a2 * lv[j, 2] - pz
            dist2 = qx * qx + qy * qy + qz * qz
            dist = math.sqrt(dist2)
            wx, wy, wz = qx / dist, qy / dist, qz / dist
            cos_l = -(wx * ln[j, 0] + wy * ln[j, 1] + wz * ln[j, 2])
            wi_n = wx * nx + wy * ny + wz * nz
            if cos_l > 0.0 and wi_n > 0.0 and wx * gx + wy * gy + wz * gz > 0.0:
                hx, hy, hz = _norm3(wx + wox, wy + woy, wz + woz)
                fr, fg, fb, pb = bsdf_eval(br, bg, bb, alpha, metal, f0r, f0g, f0b, f90, p_spec, wo_n, wi_n,
                                           hx * wox + hy * woy + hz * woz, hx * nx + hy * ny + hz * nz)
                if fr + fg + fb > 0.0:
                    if not any_hit(nmin, nmax, left, right, start, count, order, tri_v, px, py, pz, wx, wy, wz,
                                   0.0, dist * (1.0 - 1e-7)):
                        p_l = dist2 / (cos_l * larea[j] * nl)
                        w = power_heuristic(p_l, pb) / p_l
                        lr += tr * fr * lrad[j, 0] * w
                        lg += tg * fg * lrad[j, 1] * w
                        lb += tb * fb * lrad[j, 2] * w
        # next-event estimation: environment (a constant map gains nothing over BSDF sampling)
        if env_on and not env_uniform:
            wx, wy, wz = env_sample(env, env_uniform, marg_cdf, cond_cdf, rand(key, base + 3),
                                    rand(key, base + 4), rand(key, base + 5), rand(key, base + 6))
            wi_n = wx * nx + wy * ny + wz * nz
            if wi_n > 0.0 and wx * gx + wy * gy + wz * gz > 0.0:
                pe = env_pdf(env, env_on, env_uniform, marg_pdf, cond_pdf, wx, wy, wz)
                if pe > 0.0:
                    hx, hy, hz = _norm3(wx + wox, wy + woy, wz + woz)
                    fr, fg, fb, pb = bsdf_eval(br, bg, bb, alpha, metal, f0r, f0g, f0b, f90, p_spec, wo_n,
                                               wi_n, hx * wox + hy * woy + hz * woz, hx * nx + hy * ny + hz * nz)
                    if fr + fg + fb > 0.0:
                        if not any_hit(nmin, nmax, left, right, start, count, order, tri_v, px, py, pz,
                                       wx, wy, wz, 0.0, np.inf):
                            er, eg, eb = env_radiance(env, env_on, wx, wy, wz)
                            w = power_heuristic(pe, pb) / pe
                            lr += tr * fr * er * w
                            lg += tg * fg * eg * w
                            lb += tb * fb * eb * w
        # BSDF sampling for the continuation ray
        (t1x, t1y, t1z), (t2x, t2y, t2z) = _frame(nx, ny, nz)
        s1 = rand(key, base + 8)
        s2 = rand(key, base + 9)
        if rand(key, base + 7) < p_spec:
            tan2 = alpha * alpha * s1 / max(1.0 - s1, 1e-12)
            ch = 1.0 / math.sqrt(1.0 + tan2)
            sh = math.sqrt(max(0.0, 1.0 - ch * ch))
            phi = 2.0 * math.pi * s2
            hx = sh * math.cos(phi) * t1x + sh * math.sin(phi) * t2x + ch * nx
            hy = sh * math.cos(phi) * t1y + sh * math.sin(phi) * t2y + ch * ny
            hz = sh * math.cos(phi) * t1z + sh * math.sin(phi) * t2z + ch * nz
            oh = wox * hx + woy * hy + woz * hz
            wx = 2.0 * oh * hx - wox
            wy = 2.0 * oh * hy - woy
            wz = 2.0 * oh * hz - woz
        else:
            r = math.sqrt(s1)
            phi = 2.0 * math.pi * s2
            lx = r * math.cos(phi)
            ly = r * math.sin(phi)
            lz = math.sqrt(max(0.0, 1.0 - s1))
            wx = lx * t1x + ly * t2x + lz * nx
            wy = lx * t1y + ly * t2y + lz * ny
            wz = lx * t1z + ly * t2z + lz * nz
        wi_n = wx * nx + wy * ny + wz * nz
        if wi_n <= 0.0 or wx * gx + wy * gy + wz * gz <= 0.0:
            break
        hx, hy, hz = _norm3(wx + wox, wy + woy, wz + woz)
        fr, fg, fb, pb = bsdf_eval(br, bg, bb, alpha, metal, f0r, f0g, f0b, f90, p_spec, wo_n, wi_n,
                                   hx * wox + hy * woy + hz * woz, hx * nx + hy * ny + hz * nz)
        if pb <= 0.0 or fr + fg + fb <= 0.0:
            break
        tr *= fr / pb
        tg *= fg / pb
        tb *= fb / pb
        pdf_prev = pb
        if bounce >= 2:
            q = min(max(tr, max(tg, tb)), 0.95)
            if rand(key, base + 10) >= q:
                break
            tr /= q
            tg /= q
            tb /= q
        ox, oy, oz = px, py, pz
        dx, dy, dz = wx, wy, wz
    return lr, lg, lb


@njit(cache=True, parallel=True)
def render_rgb(seed, spp, max_depth, clamp, tile_size,
               nmin, nmax, left, right, start, count, order, tri_v, tri_n, tri_uv, tri_mat,
               mat_base, mat_rough, mat_metal, mat_spec, mat_tex, tex_data, tex_off, tex_w, tex_h,
               lc, lu, lv, ln, lrad, larea, env, env_on, env_uniform, marg_cdf, cond_cdf, marg_pdf, cond_pdf,
               cam_pos, cam_rot, fx, fy, cx, cy, width, height, lens_r, focus, rgb, nan_count):
    """Box-filtered path-traced radiance. ``nan_count`` collects per-tile discarded samples."""
    tiles_x = (width + tile_size - 1) // tile_size
    tiles_y = (height + tile_size - 1) // tile_size
    for tile in prange(tiles_x * tiles_y):
        ty = tile // tiles_x
        tx = tile % tiles_x
        bad = 0
        for row in range(ty * tile_size, min((ty + 1) * tile_size, height)):
            for col in range(tx * tile_size, min((tx + 1) * tile_size, width)):
                pixel = row * width + col
                ar = 0.0
                ag = 0.0
                ab = 0.0
                for s in range(spp):
                    key = sample_key(seed, pixel, s)
                    ox, oy, oz, dx, dy, dz, _ = camera_ray(cam_pos, cam_rot, fx, fy, cx, cy,
                                                           col + rand(key, 0), row + rand(key, 1),
                                                           lens_r, focus, rand(key, 2), rand(key, 3))
                    r, g, b = trace_sample(key, nmin, nmax, left, right, start, count, order, tri_v, tri_n,
                                           tri_uv, tri_mat, mat_base, mat_rough, mat_metal, mat_spec, mat_tex,
                                           tex_data, tex_off, tex_w, tex_h, lc, lu, lv, ln, lrad, larea, env,
                                           env_on, env_uniform, marg_cdf, cond_cdf, marg_pdf, cond_pdf,
                                           ox, oy, oz, dx, dy, dz, max_depth)
                    if not (math.isfinite(r) and math.isfinite(g) and math.isfinite(b)):
                        bad += 1
                        continue
                    mx = max(r, max(g, b))
                    if clamp > 0.0 and mx > clamp:
                        k = clamp / mx
                        r *= k
                        g *= k
                        b *= k
                    ar += r
                    ag += g
                    ab += b
                rgb[row, col, 0] = ar / spp
                rgb[row, col, 1] = ag / spp
                rgb[row, col, 2] = ab / spp
        nan_count[tile] = bad
