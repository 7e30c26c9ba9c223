"""Asset catalog: every mesh, material and environment map a run references."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import AssetConfig, GenerationConfig, MaterialConfig, resolved_category_ids
from ..errors import AssetError
from .hdri import HdriMap, load_hdri
from .loaders import load_mesh_parts, load_texture
from .materials import Material
from .mesh import Mesh, ProxyBox, compute_proxy_box, make_fake_model, merge_children

ASSET_ROOT_ENV = "SYNTHGEN_ASSET_ROOT"
HDRI_SUFFIXES = (".hdr", ".pfm")


@dataclass(eq=False)
class Asset:
    key: str
    name: str
    role: str
    category_id: int
    parts: list[Mesh]
    proxy: ProxyBox
    copies: int = 1
    source: str = ""
    checksum: str = ""

    @property
    def n_triangles(self) -> int:
        return sum(p.n_faces for p in self.parts)


@dataclass(eq=False)
class AssetCatalog:
    targets: list[Asset] = field(default_factory=list)
    distractors: list[Asset] = field(default_factory=list)
    fakes: list[Asset] = field(default_factory=list)
    plane_materials: list[Material] = field(default_factory=list)
    hdris: list[HdriMap] = field(default_factory=list)
    hdri_ids: list[str] = field(default_factory=list)
    categories: list[tuple[int, str]] = field(default_factory=list)

    def pool(self, role: str) -> list[Asset]:
        return {"target": self.targets, "distractor": self.distractors, "fake": self.fakes}[role]

    def asset(self, key: str) -> Asset:
        for group in (self.targets, self.distractors, self.fakes):
            for a in group:
                if a.key == key:
                    return a
        raise KeyError(key)

    def identity(self) -> list[str]:
        return [f"{a.key}:{a.checksum}" for g in (self.targets, self.distractors, self.fakes) for a in g] + \
            list(self.hdri_ids)

    def checksums(self) -> dict[str, str]:
        out = {}
        for g in (self.targets, self.distractors, self.fakes):
            for a in g:
                if a.source:
                    out[a.source] = a.checksum
        return out


def asset_root(base_dir=None) -> Path:
    env = os.environ.get(ASSET_ROOT_ENV)
    if env:
        return Path(env)
    return Path(base_dir) if base_dir is not None else Path.cwd()


def resolve_path(path: str, base_dir=None) -> str:
    if path.startswith("builtin:"):
        return path
    p = Path(path).expanduser()
    if not p.is_absolute():
        p = asset_root(base_dir) / p
    return str(p)


def file_checksum(path: str) -> str:
    if path.startswith("builtin:"):
        return hashlib.sha256(path.encode()).hexdigest()
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def material_from_config(mc: MaterialConfig, base_dir=None) -> Material:
    texture = load_texture(resolve_path(mc.texture, base_dir)) if mc.texture else None
    return Material(base_color=mc.base_color, roughness=mc.roughness, metallic=mc.metallic,
                    specular=mc.specular, texture=texture, texture_ref=mc.texture)


def _load_asset(ac: AssetConfig, role: str, index: int, category_id: int, base_dir) -> Asset:
    path = resolve_path(ac.path, base_dir)
    parts = load_mesh_parts(path, scale=ac.scale, category_id=category_id)
    if ac.material is not None:
        mat = material_from_config(ac.material, base_dir)
        for p in parts:
            p.material = mat
    if ac.join_children:
        parts = [merge_children(parts)]
    name = ac.name or Path(ac.path).stem or ac.path
    return Asset(key=f"{role}:{index}", name=name, role=role, category_id=category_id, parts=parts,
                 proxy=compute_proxy_box(parts), copies=ac.copies, source=ac.path,
                 checksum=file_checksum(path))


def _hdri_pool(cfg: GenerationConfig, base_dir) -> list[str]:
    bg = cfg.background
    refs = [resolve_path(h, base_dir) for h in bg.hdris]
    if bg.hdri_dir:
        d = Path(resolve_path(bg.hdri_dir, base_dir))
        if not d.is_dir():
            raise AssetError(f"HDRI pool background.hdri_dir: directory {d} does not exist")
        refs += sorted(str(p) for p in d.iterdir() if p.suffix.lower() in HDRI_SUFFIXES)
    if bg.enabled and not refs:
        raise AssetError("HDRI pool background.hdris/background.hdri_dir is empty but the background is enabled")
    return refs


def build_catalog(cfg: GenerationConfig, base_dir=None) -> AssetCatalog:
    """Load every asset referenced by ``cfg``.

    Relative paths resolve against ``$SYNTHGEN_ASSET_ROOT`` when set,
    otherwise against ``base_dir`` (normally the config file's directory).
    """
    cat = AssetCatalog()
    ids = resolved_category_ids(cfg)
    names: dict[int, str] = {}
    for i, (ac, cid) in enumerate(zip(cfg.targets, ids)):
        asset = _load_asset(ac, "target", i, cid, base_dir)
        cat.targets.append(asset)
        names.setdefault(cid, asset.name)
    cat.categories = sorted(names.items())
    for i, ac in enumerate(cfg.distractors):
        cat.distractors.append(_load_asset(ac, "distractor", i, 0, base_dir))
    for i, ac in enumerate(cfg.fake_assets):
        cat.fakes.append(_load_asset(ac, "fake", i, 0, base_dir))
    if cfg.fakes.deform_targets:
        for i, t in enumerate(cat.targets):
            seed = (cfg.seed * 1_000_003 + i) & 0xFFFFFFFF
            parts = [make_fake_model(p, cfg.fakes.amplitude, seed + 17 * k) for k, p in enumerate(t.parts)]
            cat.fakes.append(Asset(key=f"fake:deformed:{i}", name=f"{t.name}_fake", role="fake", category_id=0,
                                   parts=parts, proxy=compute_proxy_box(parts), copies=t.copies,
                                   source=t.source, checksum=t.checksum))
    cat.plane_materials = [material_from_config(m, base_dir) for m in cfg.plane.materials]
    for ref in _hdri_pool(cfg, base_dir):
        cat.hdris.append(load_hdri(ref))
        cat.hdri_ids.append(ref if ref.startswith("builtin:") else Path(ref).name)
    return cat


def hdri_checksum(h: HdriMap) -> str:
    return hashlib.sha256(np.ascontiguousarray(h.radiance).tobytes()).hexdigest()


__all__ = ["Asset", "AssetCatalog", "build_catalog", "resolve_path", "asset_root", "ASSET_ROOT_ENV",
           "material_from_config", "file_checksum", "hdri_checksum"]
