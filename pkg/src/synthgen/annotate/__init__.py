"""Bounding boxes from instance masks and dataset export (COCO, YOLO, metadata)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import SynthGenError

log = logging.getLogger(__name__)

METADATA_SCHEMA = "synthgen.frame/1"
COCO_SCHEMA = "synthgen.coco/1"


@dataclass(frozen=True, order=True)
class BBox:
    """Pixel box; ``(x, y)`` is the top-left pixel, ``w``/``h`` count pixels."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.w < 1 or self.h < 1:
            raise ValueError(f"invalid bbox {self}")

    @property
    def area(self) -> int:
        return self.w * self.h

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    def within(self, width: int, height: int) -> bool:
        return self.x + self.w <= width and self.y + self.h <= height


@dataclass(frozen=True)
class Annotation:
    frame_index: int
    instance_id: int
    category_id: int
    bbox: BBox
    visible_pixel_count: int


def bbox_from_mask(instance_pass: np.ndarray, instance_id: int):
    """Tight box around the pixels equal to ``instance_id``, or ``None``."""
    mask = np.asarray(instance_pass) == instance_id
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def annotations_from_passes(frame_index: int, instance_pass: np.ndarray, semantic_pass: np.ndarray,
                            instances) -> list[Annotation]:
    """One annotation per visible target instance (category >= 1), in instance order."""
    ids = np.asarray(instance_pass)
    out = []
    for inst in instances:
        if inst.category_id < 1:
            continue
        mask = ids == inst.instance_id
        count = int(mask.sum())
        if count == 0:
            continue
        cats = np.unique(np.asarray(semantic_pass)[mask])
        if cats.size != 1 or int(cats[0]) != inst.category_id:
            raise SynthGenError(f"frame {frame_index}: instance {inst.instance_id} pixels carry categories "
                                f"{cats.tolist()}, expected {inst.category_id}")
        out.append(Annotation(frame_index, inst.instance_id, inst.category_id,
                              bbox_from_mask(ids, inst.instance_id), count))
    return out


def filter_visible(annotations, min_pixels: int):
    """Split into ``(kept, removed)`` by ``visible_pixel_count >= min_pixels``."""
    if min_pixels < 1:
        raise ValueError("min_pixels must be >= 1")
    kept = [a for a in annotations if a.visible_pixel_count >= min_pixels]
    removed = [a for a in annotations if a.visible_pixel_count < min_pixels]
    for a in removed:
        log.info("frame %d: instance %d below %d visible pixels (%d)", a.frame_index, a.instance_id, min_pixels,
                 a.visible_pixel_count)
    return kept, removed


# ---------------------------------------------------------------- COCO


def image_record(frame_index: int, width: int, height: int) -> dict:
    return {"id": int(frame_index), "file_name": f"{frame_index:06d}.png", "width": int(width),
            "height": int(height)}


def export_coco(images, annotations, categories) -> dict:
    """COCO detection document. ``images`` are :func:`image_record` dicts,
    ``categories`` ``(id, name)`` pairs; annotation ids run ``1..N``."""
    ids = [im["id"] for im in images]
    if len(set(ids)) != len(ids):
        raise SynthGenError("export_coco: duplicate image ids")
    known = set(ids)
    anns = []
    for k, a in enumerate(sorted(annotations, key=lambda a: (a.frame_index, a.instance_id)), start=1):
        if a.frame_index not in known:
            raise SynthGenError(f"export_coco: annotation for unknown image {a.frame_index}")
        anns.append({"id": k, "image_id": a.frame_index, "category_id": a.category_id,
                     "bbox": a.bbox.as_list(), "area": a.bbox.area, "iscrowd": 0,
                     "instance_id": a.instance_id, "visible_pixels": a.visible_pixel_count})
    return {
        "info": {"description": "synthetic detection dataset", "version": COCO_SCHEMA},
        "images": sorted(images, key=lambda im: im["id"]),
        "annotations": anns,
        "categories": [{"id": int(c), "name": str(n), "supercategory": "object"} for c, n in categories],
    }


# ---------------------------------------------------------------- YOLO


def export_yolo(width: int, height: int, annotations) -> str:
    """``class cx cy w h`` per line, normalized, 6 decimals, class = category - 1."""
    lines = []
    for a in annotations:
        b = a.bbox
        lines.append(f"{a.category_id - 1} {(b.x + b.w / 2) / width:.6f} {(b.y + b.h / 2) / height:.6f} "
                     f"{b.w / width:.6f} {b.h / height:.6f}")
    return "".join(line + "\n" for line in lines)


def parse_yolo(text: str, width: int, height: int) -> list[tuple[int, tuple[float, float, float, float]]]:
    """Inverse of :func:`export_yolo`: ``(category_id, (x, y, w, h))`` in float pixels."""
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        c, cx, cy, w, h = line.split()
        w_px, h_px = float(w) * width, float(h) * height
        out.append((int(c) + 1, (float(cx) * width - w_px / 2, float(cy) * height - h_px / 2, w_px, h_px)))
    return out


# ---------------------------------------------------------------- metadata


def export_metadata(scene, settle_outcome=None, render_stats=None, annotations=(), removed=(),
                    catalog=None) -> dict:
    """Everything needed to reproduce and interpret one frame."""
    cam = scene.camera
    instances = []
    for inst in scene.instances:
        rec = {"instance_id": inst.instance_id, "role": inst.role, "asset_key": inst.asset_key,
               "category_id": inst.category_id, "pose": inst.transform().tolist(),
               "position": list(inst.position), "euler_deg": list(inst.euler), "offset": list(inst.offset)}
        if catalog is not None:
            rec["asset_name"] = catalog.asset(inst.asset_key).name
        if inst.material is not None:
            rec["material"] = inst.material.to_record()
        instances.append(rec)
    physics = settle_outcome if settle_outcome is not None else scene.physics
    return {
        "schema": METADATA_SCHEMA,
        "frame_index": scene.frame_index,
        "camera": {"intrinsics": cam.intrinsics.tolist(), "width": cam.width, "height": cam.height,
                   "camera_to_world": cam.camera_to_world().tolist(), "position": list(cam.position),
                   "look_at": list(cam.look_at), "fstop": cam.fstop, "focal_mm": cam.focal_mm,
                   "distance": cam.distance, "elevation_deg": cam.elevation, "azimuth_deg": cam.azimuth},
        "anchor": {"position": list(scene.anchor.position), "yaw_deg": scene.anchor.yaw,
                   "radius": scene.anchor.radius, "azimuth_deg": scene.anchor.azimuth,
                   "elevation_deg": scene.anchor.elevation},
        "lights": [{"name": l.name, "position": list(l.position), "direction": list(l.direction),
                    "intensity": l.intensity, "color": list(l.color), "size": l.size, "distance": l.distance}
                   for l in scene.lights.lights],
        "hdri": {"index": scene.hdri_index, "id": scene.hdri_id, "scale": scene.background_scale},
        "plane_material": scene.plane_material_index,
        "instances": instances,
        "requested_counts": dict(scene.requested_counts),
        "dropped": list(scene.dropped),
        "scene_retries": scene.retries,
        "physics": physics if physics is not None else {"enabled": False},
        "render": dict(render_stats) if render_stats else None,
        "annotations": [{"instance_id": a.instance_id, "category_id": a.category_id, "bbox": a.bbox.as_list(),
                         "visible_pixels": a.visible_pixel_count} for a in annotations],
        "filtered": [{"instance_id": a.instance_id, "visible_pixels": a.visible_pixel_count} for a in removed],
        "no_visible_targets": not annotations,
    }


__all__ = ["BBox", "Annotation", "bbox_from_mask", "annotations_from_passes", "filter_visible", "export_coco",
           "image_record", "export_yolo", "parse_yolo", "export_metadata", "METADATA_SCHEMA"]
