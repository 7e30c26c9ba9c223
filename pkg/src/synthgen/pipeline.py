"""Run directories: generate scene specs, render frame intervals, export datasets."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from filelock import FileLock, Timeout

from . import __version__
from .annotate import (Annotation, BBox, annotations_from_passes, export_coco, export_metadata, export_yolo,
                       filter_visible, image_record)
from .assets.catalog import ASSET_ROOT_ENV, build_catalog
from .codecs import encode_srgb8, write_pfm, write_png8, write_png16
from .config import GenerationConfig, parse_config
from .errors import ConfigError, SynthGenError
from .evaluation import ApResult, evaluate, format_table, load_detections, load_ground_truth
from .render import FrameBuffers, RenderSettings, check_interval, render_frame
from .sampler import sample_scene, scene_from_dict, scene_to_dict

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
CONFIG_SNAPSHOT = "config.toml"
LOCK = ".lock"
MANIFEST_SCHEMA = "synthgen.manifest/1"
STATUS_ORDER = ("sampled", "settled", "rendered", "exported")


class RunError(SynthGenError):
    """A run directory is missing, locked or inconsistent."""


def frame_name(k: int) -> str:
    return f"{k:06d}"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _read_json(path: Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _lock(run_dir: Path) -> FileLock:
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(run_dir / LOCK), timeout=0)
    try:
        lock.acquire()
    except Timeout:
        raise RunError(f"{run_dir}: run directory is in use by another process") from None
    return lock


class Run:
    """A run directory and its append-only manifest."""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST

    def exists(self) -> bool:
        return self.manifest_path.is_file()

    def manifest(self) -> dict:
        if not self.exists():
            raise RunError(f"{self.root}: no {MANIFEST}; run 'generate' first")
        return _read_json(self.manifest_path)

    def save_manifest(self, m: dict) -> None:
        _dump_json(self.manifest_path, m)

    def config(self, manifest: Optional[dict] = None) -> GenerationConfig:
        m = manifest or self.manifest()
        cfg = parse_config((self.root / CONFIG_SNAPSHOT).read_bytes().decode("utf-8"))
        if m.get("seed_override") is not None:
            cfg = replace(cfg, seed=int(m["seed_override"]))
        return cfg

    def asset_base(self, manifest: dict) -> Path:
        return Path(manifest["asset_base"])

    def scene_path(self, k: int) -> Path:
        return self.root / "scenes" / f"{frame_name(k)}.json"


# ---------------------------------------------------------------- generate


def cmd_generate(config_path, out_dir, seed: Optional[int] = None) -> dict:
    """Sample (and settle) every scene of the run; no rendering."""
    config_path = Path(config_path)
    try:
        raw = config_path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{config_path}: {exc.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{config_path}: not valid UTF-8 (byte {exc.start})") from None
    cfg = parse_config(text)
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    base = config_path.resolve().parent
    catalog = build_catalog(cfg, base)
    run = Run(out_dir)
    lock = _lock(run.root)
    try:
        history = run.manifest().get("history", []) if run.exists() else []
        scenes = []
        for k in range(cfg.scene_count):
            try:
                scenes.append(sample_scene(cfg, catalog, k))
            except SynthGenError as exc:
                raise type(exc)(f"frame {k}: {exc}") from None
        (run.root / CONFIG_SNAPSHOT).write_bytes(raw)
        for s in scenes:
            _dump_json(run.scene_path(s.frame_index), scene_to_dict(s))
        status = "settled" if cfg.physics_enabled else "sampled"
        history.append({"event": "generate", "time": _now(), "frames": [0, cfg.scene_count - 1]})
        manifest = {
            "schema": MANIFEST_SCHEMA,
            "tool_version": __version__,
            "seed": cfg.seed,
            "seed_override": seed,
            "config_file": CONFIG_SNAPSHOT,
            "config_sha256": hashlib.sha256(raw).hexdigest(),
            "asset_base": str(base),
            "asset_root_env": ASSET_ROOT_ENV,
            "assets": catalog.checksums(),
            "hdris": list(catalog.hdri_ids),
            "scene_count": cfg.scene_count,
            "frames": {str(s.frame_index): {"status": status,
                                            "scene_sha256": sha256_file(run.scene_path(s.frame_index)),
                                            "converged": (s.physics or {}).get("converged", True)}
                       for s in scenes},
            "history": history,
        }
        run.save_manifest(manifest)
    finally:
        lock.release()
    return manifest


# ---------------------------------------------------------------- render


def write_frame(root: Path, fb: FrameBuffers, scene, cfg: GenerationConfig, catalog) -> dict:
    """Write every configured pass plus labels and metadata; returns ``{relpath: sha256}``."""
    name = frame_name(fb.frame_index)
    passes = set(cfg.output_passes)
    files: list[Path] = []

    def target(sub, ext):
        p = root / sub / f"{name}.{ext}"
        p.parent.mkdir(parents=True, exist_ok=True)
        files.append(p)
        return p

    if "rgb" in passes:
        write_png8(target("images", "png"), encode_srgb8(fb.rgb))
    if "depth" in passes:
        valid = np.isfinite(fb.depth)
        write_pfm(target("depth", "pfm"), np.stack([np.where(valid, fb.depth, 0.0), valid.astype(np.float32),
                                                    np.zeros_like(fb.depth)], axis=-1).astype(np.float32))
    if "normal" in passes:
        write_pfm(target("normals", "pfm"), fb.normal)
    if "instance_seg" in passes:
        write_png16(target("masks", "png"), fb.instance)
    if "semantic_seg" in passes:
        write_png16(target("semantic", "png"), fb.semantic)
    anns = annotations_from_passes(fb.frame_index, fb.instance, fb.semantic, scene.instances)
    kept, removed = filter_visible(anns, cfg.annotate.min_pixels)
    target("labels", "txt").write_text(export_yolo(fb.width, fb.height, kept), encoding="utf-8")
    meta = export_metadata(scene, None, fb.stats, kept, removed, catalog)
    _dump_json(target("meta", "json"), meta)
    return {str(p.relative_to(root)): sha256_file(p) for p in files}


def rebuild_coco(run: Run, manifest: dict, catalog) -> Path:
    images, anns = [], []
    for key, rec in sorted(manifest["frames"].items(), key=lambda kv: int(kv[0])):
        if rec["status"] != "exported":
            continue
        k = int(key)
        meta = _read_json(run.root / "meta" / f"{frame_name(k)}.json")
        images.append(image_record(k, meta["camera"]["width"], meta["camera"]["height"]))
        for a in meta["annotations"]:
            anns.append(Annotation(k, a["instance_id"], a["category_id"], BBox(*a["bbox"]), a["visible_pixels"]))
    doc = export_coco(images, anns, catalog.categories)
    path = run.root / "annotations" / "coco.json"
    _dump_json(path, doc)
    return path


def parse_frames(spec: str) -> tuple[int, int]:
    """``"A..B"`` or ``"A"`` to an inclusive interval."""
    try:
        if ".." in spec:
            a, b = spec.split("..", 1)
            return int(a), int(b)
        return int(spec), int(spec)
    except ValueError:
        raise ConfigError(f"--frames: expected A..B, got {spec!r}") from None


def cmd_render(run_dir, f_s: Optional[int] = None, f_e: Optional[int] = None, spp: Optional[int] = None,
               threads: Optional[int] = None) -> dict:
    """Render and export frames ``f_s..f_e`` of a generated run."""
    run = Run(run_dir)
    manifest = run.manifest()
    cfg = run.config(manifest)
    f_s = cfg.render_start if f_s is None else f_s
    f_e = cfg.render_end if f_e is None else f_e
    check_interval(f_s, f_e, cfg.scene_count)
    missing = [k for k in range(f_s, f_e + 1) if not run.scene_path(k).is_file()]
    if missing:
        raise RunError(f"frames {missing} have no scene spec; run 'generate' first")
    settings = RenderSettings.from_config(cfg, spp)
    lock = _lock(run.root)
    try:
        catalog = build_catalog(cfg, run.asset_base(manifest))
        for k in range(f_s, f_e + 1):
            scene = scene_from_dict(_read_json(run.scene_path(k)))
            try:
                fb = render_frame(scene, settings, cfg.seed, catalog, cfg.plane.size, threads)
                files = write_frame(run.root, fb, scene, cfg, catalog)
            except SynthGenError as exc:
                raise type(exc)(f"frame {k}: {exc}") from None
            rec = manifest["frames"][str(k)]
            rec["status"] = "exported"
            rec["files"] = files
            rec["spp"] = settings.spp
        manifest["history"].append({"event": "render", "time": _now(), "frames": [f_s, f_e], "spp": settings.spp})
        rebuild_coco(run, manifest, catalog)
        run.save_manifest(manifest)
    finally:
        lock.release()
    return manifest


# ---------------------------------------------------------------- evaluate


def cmd_evaluate(gt_path, dets_path, report_path, max_dets: Optional[int] = None) -> ApResult:
    """Evaluate detections against COCO ground truth; writes ``report`` JSON and a ``.txt`` table."""
    gts = load_ground_truth(gt_path)
    dets = load_detections(dets_path)
    res = evaluate(dets, gts, max_dets=max_dets)
    names = {}
    try:
        names = {int(c["id"]): c["name"] for c in _read_json(Path(gt_path)).get("categories", [])}
    except (KeyError, TypeError, ValueError):
        pass
    table = format_table(res, names)
    report = Path(report_path)
    report.parent.mkdir(parents=True, exist_ok=True)
    _dump_json(report, res.to_dict())
    report.with_suffix(".txt").write_text(table, encoding="utf-8")
    return res


# ---------------------------------------------------------------- inspect


def cmd_inspect(run_dir) -> dict:
    """Frame statuses, sampled-parameter histograms, annotation counts and file integrity."""
    run = Run(run_dir)
    manifest = run.manifest()
    statuses: dict[str, int] = {}
    intensities, counts = [], []
    per_class: dict[int, int] = {}
    corrupted = []
    for key, rec in sorted(manifest["frames"].items(), key=lambda kv: int(kv[0])):
        k = int(key)
        statuses[rec["status"]] = statuses.get(rec["status"], 0) + 1
        sp = run.scene_path(k)
        if sp.is_file():
            if rec.get("scene_sha256") and sha256_file(sp) != rec["scene_sha256"]:
                corrupted.append({"frame": k, "file": str(sp.relative_to(run.root)), "problem": "checksum mismatch"})
            scene = _read_json(sp)
            intensities += [l["intensity"] for l in scene["lights"]]
            counts.append(len(scene["instances"]))
        for rel, digest in rec.get("files", {}).items():
            p = run.root / rel
            if not p.is_file():
                corrupted.append({"frame": k, "file": rel, "problem": "missing"})
            elif sha256_file(p) != digest:
                corrupted.append({"frame": k, "file": rel, "problem": "checksum mismatch"})
        if rec["status"] == "exported":
            meta_path = run.root / "meta" / f"{frame_name(k)}.json"
            if meta_path.is_file():
                try:
                    for a in _read_json(meta_path)["annotations"]:
                        per_class[a["category_id"]] = per_class.get(a["category_id"], 0) + 1
                except (json.JSONDecodeError, KeyError):
                    pass
    hist_i = np.histogram(intensities, bins=8) if intensities else (np.zeros(0), np.zeros(0))
    hist_c = np.bincount(counts) if counts else np.zeros(0, int)
    return {
        "frames": len(manifest["frames"]),
        "status": statuses,
        "rendered": statuses.get("exported", 0) + statuses.get("rendered", 0),
        "light_intensity_histogram": {"counts": hist_i[0].tolist(), "edges": hist_i[1].tolist()},
        "instance_count_histogram": hist_c.tolist(),
        "annotations_per_class": {str(c): n for c, n in sorted(per_class.items())},
        "annotations_total": sum(per_class.values()),
        "corrupted": corrupted,
        "history": manifest.get("history", []),
    }


def format_inspect(summary: dict) -> str:
    lines = [f"frames: {summary['frames']}  rendered: {summary['rendered']}"]
    for s in STATUS_ORDER:
        if s in summary["status"]:
            lines.append(f"  {s:<9} {summary['status'][s]}")
    h = summary["light_intensity_histogram"]
    if h["counts"]:
        lines.append("light intensity (W/m^2):")
        for c, lo, hi in zip(h["counts"], h["edges"][:-1], h["edges"][1:]):
            lines.append(f"  [{lo:7.3f}, {hi:7.3f})  {c}")
    lines.append("instances per scene: " + ", ".join(f"{n}:{c}" for n, c in
                                                  enumerate(summary["instance_count_histogram"]) if c))
    lines.append(f"annotations: {summary['annotations_total']}")
    for c, n in summary["annotations_per_class"].items():
        lines.append(f"  class {c}: {n}")
    for bad in summary["corrupted"]:
        lines.append(f"CORRUPTED frame {bad['frame']}: {bad['file']} ({bad['problem']})")
    return "\n".join(lines) + "\n"
