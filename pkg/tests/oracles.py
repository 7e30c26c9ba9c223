"""Reference implementations that share no code with the package, plus the acceptance ledger."""

import itertools

import numpy as np
from scipy.spatial.transform import Rotation

IOU_THRESHOLDS = [round(0.5 + 0.05 * i, 2) for i in range(10)]

# (number, title, passed, detail) appended by the acceptance suite
ACCEPTANCE: list[tuple[int, str, bool, str]] = []


# ---------------------------------------------------------------- oriented boxes


def box_corners(inst, proxies):
    p = proxies[inst.asset_key]
    R_inst = Rotation.from_euler("xyz", inst.euler, degrees=True).as_matrix()
    R = R_inst @ p.rotation
    c = np.asarray(inst.position) + R_inst @ p.center
    signs = np.array(list(itertools.product((-1, 1), repeat=3)), float)
    return c + (signs * p.half_extents) @ R.T, R


def box_depth(a, b, proxies):
    """Penetration depth by projecting all corners on the 15 candidate axes (< 0 means separated)."""
    ca, Ra = box_corners(a, proxies)
    cb, Rb = box_corners(b, proxies)
    axes = [Ra[:, i] for i in range(3)] + [Rb[:, j] for j in range(3)]
    for i in range(3):
        for j in range(3):
            n = np.cross(Ra[:, i], Rb[:, j])
            if np.linalg.norm(n) > 1e-9:
                axes.append(n / np.linalg.norm(n))
    depth = np.inf
    for n in axes:
        pa, pb = ca @ n, cb @ n
        depth = min(depth, min(pa.max(), pb.max()) - max(pa.min(), pb.min()))
    return depth


# ---------------------------------------------------------------- rays


def brute_force_hits(tris, o, d):
    """Plain float64 Moller-Trumbore over every triangle; ties go to the lower id."""
    a = tris[:, 0]
    e1, e2 = tris[:, 1] - a, tris[:, 2] - a
    ids, ts = np.full(len(o), -1), np.full(len(o), np.inf)
    for k in range(len(o)):
        p = np.cross(d[k], e2)
        det = (e1 * p).sum(1)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            s = o[k] - a
            u = (s * p).sum(1) * inv
            q = np.cross(s, e1)
            v = (d[k] * q).sum(1) * inv
            t = (e2 * q).sum(1) * inv
        hit = (det != 0) & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > 1e-9)
        t = np.where(hit, t, np.inf)
        j = int(np.argmin(t))
        if np.isfinite(t[j]):
            ids[k], ts[k] = j, t[j]
    return ids, ts


# ---------------------------------------------------------------- detection metrics


def ref_iou(a, b):
    x1, y1 = max(a[0], b[0]), max(a[1], b[1])
    x2, y2 = min(a[0] + a[2], b[0] + b[2]), min(a[1] + a[3], b[1] + b[3])
    inter = max(0.0, x2 - x1) * max(0.0, y2 - y1)
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if inter > 0 else 0.0


def ref_ap(dets, gts, cls, thr):
    """From-scratch COCO AP of one class: greedy matching, then max precision at recall >= r."""
    dets = [d for d in dets if d.category_id == cls]
    gts = [g for g in gts if g.category_id == cls]
    ranked = sorted(enumerate(dets), key=lambda p: (-p[1].score, p[0]))
    used = [False] * len(gts)
    flags = []
    for _, d in ranked:
        best, best_v = None, -1.0
        for j, g in enumerate(gts):
            if used[j] or g.image_id != d.image_id:
                continue
            v = ref_iou(d.bbox, g.bbox)
            if v >= thr - 1e-12 and v > best_v:
                best, best_v = j, v
        if best is not None:
            used[best] = True
        flags.append(best is not None)
    prec, rec = [], []
    for k in range(1, len(flags) + 1):
        tp = sum(flags[:k])
        prec.append(tp / k)
        rec.append(tp / len(gts))
    total = 0.0
    for i in range(101):
        r = i / 100
        cands = [p for p, q in zip(prec, rec) if q >= r]
        total += max(cands) if cands else 0.0
    return total / 101


def ref_map(dets, gts):
    """``(mAP@50, mAP@50-95, per-threshold mAP)`` over classes present in ``gts``."""
    classes = sorted({g.category_id for g in gts})
    per_thr = [float(np.mean([ref_ap(dets, gts, c, t) for c in classes])) for t in IOU_THRESHOLDS]
    return per_thr[0], float(np.mean(per_thr)), per_thr


def random_detection_instance(rng, det_cls, gt_cls):
    """At most 5 GT and 5 detections over 2 classes and 1-2 images, detections mostly near a GT."""
    n_img = int(rng.integers(1, 3))
    gts, dets = [], []
    for _ in range(int(rng.integers(1, 6))):
        x, y = rng.uniform(0, 50, 2)
        w, h = rng.uniform(5, 30, 2)
        gts.append(gt_cls(int(rng.integers(n_img)), int(rng.integers(1, 3)), (x, y, w, h)))
    for _ in range(int(rng.integers(0, 6))):
        if rng.random() < 0.7:
            g = gts[int(rng.integers(len(gts)))]
            box = tuple(np.asarray(g.bbox) + rng.normal(0, 3, 4) * [1, 1, 0.3, 0.3])
            box = (box[0], box[1], max(box[2], 1.0), max(box[3], 1.0))
            img, cat = g.image_id, g.category_id if rng.random() < 0.85 else 3 - g.category_id
        else:
            box = (*rng.uniform(0, 50, 2), *rng.uniform(5, 30, 2))
            img, cat = int(rng.integers(n_img)), int(rng.integers(1, 3))
        dets.append(det_cls(img, cat, box, float(np.round(rng.random(), 1))))
    return dets, gts


# ---------------------------------------------------------------- masks


def pixel_scan(mask):
    """Tight ``[x, y, w, h]`` of a boolean mask by visiting every pixel."""
    xs, ys = [], []
    for y in range(mask.shape[0]):
        for x in range(mask.shape[1]):
            if mask[y, x]:
                xs.append(x)
                ys.append(y)
    return [min(xs), min(ys), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1]
