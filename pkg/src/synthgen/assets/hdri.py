"""Equirectangular environment maps.

Texel ``(row, col)`` covers polar angle ``theta = pi * (row + 0.5) / H``
measured from +z and azimuth ``phi = 2 pi (col + 0.5) / W`` measured from +x
towards +y. Row 0 is the zenith.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..codecs import read_hdr, read_pfm
from ..errors import AssetError


@dataclass(frozen=True, eq=False)
class HdriMap:
    radiance: np.ndarray
    intensity_scale: float = 1.0
    name: str = ""

    def __post_init__(self):
        r = np.asarray(self.radiance)
        if r.ndim != 3 or r.shape[2] != 3:
            raise AssetError(f"{self.name or 'hdri'}: radiance must be HxWx3, got {r.shape}")
        h, w = r.shape[:2]
        if w != 2 * h:
            raise AssetError(f"{self.name or 'hdri'}: equirectangular map needs width = 2 x height, got {w}x{h}")
        if not np.all(np.isfinite(r)):
            raise AssetError(f"{self.name or 'hdri'}: non-finite radiance texel")
        if np.any(r < 0):
            raise AssetError(f"{self.name or 'hdri'}: negative radiance texel")
        if not self.intensity_scale >= 0:
            raise AssetError(f"{self.name or 'hdri'}: intensity_scale must be >= 0")

    @property
    def width(self) -> int:
        return self.radiance.shape[1]

    @property
    def height(self) -> int:
        return self.radiance.shape[0]

    def mean_radiance(self) -> float:
        return float(self.radiance.mean())

    def is_constant(self) -> bool:
        return bool(np.all(self.radiance == self.radiance[0, 0]))


def load_hdri(path) -> HdriMap:
    """Read a ``.hdr`` (Radiance RGBE) or ``.pfm`` map, or ``builtin:<name>``."""
    spath = str(path)
    if spath.startswith("builtin:"):
        return builtin_hdri(spath.split(":", 1)[1])
    p = Path(path)
    if not p.is_file():
        raise AssetError(f"{path}: HDRI file not found")
    suffix = p.suffix.lower()
    if suffix in (".hdr", ".pic", ".rgbe"):
        data = read_hdr(p)
    elif suffix == ".pfm":
        data = read_pfm(p)
        if data.ndim == 2:
            data = np.repeat(data[..., None], 3, axis=2)
    else:
        raise AssetError(f"{path}: unsupported HDRI format {suffix!r} (expected .hdr or .pfm)")
    return HdriMap(np.ascontiguousarray(data, dtype=np.float32), name=p.name)


def constant_hdri(value: float = 1.0, height: int = 4, name: str = "constant") -> HdriMap:
    return HdriMap(np.full((height, 2 * height, 3), value, dtype=np.float32), name=name)


def _sky(height: int = 64) -> np.ndarray:
    w = 2 * height
    theta = np.pi * (np.arange(height) + 0.5) / height
    phi = 2 * np.pi * (np.arange(w) + 0.5) / w
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    up = np.cos(th)
    zenith = np.array([0.35, 0.55, 0.95])
    horizon = np.array([0.9, 0.9, 0.85])
    ground = np.array([0.25, 0.22, 0.2])
    t = np.clip(up, 0, 1)[..., None] ** 0.5
    sky = horizon * (1 - t) + zenith * t
    rad = np.where(up[..., None] >= 0, sky, ground * np.ones(3))
    sun_dir = np.array([np.cos(0.8) * np.sin(0.9), np.sin(0.8) * np.sin(0.9), np.cos(0.9)])
    d = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
    cos_sun = d @ sun_dir
    rad = rad + 40.0 * np.exp((cos_sun - 1.0) / 0.002)[..., None] * np.array([1.0, 0.95, 0.85])
    return rad.astype(np.float32)


def _studio(height: int = 32) -> np.ndarray:
    w = 2 * height
    theta = np.pi * (np.arange(height) + 0.5) / height
    up = np.cos(theta)
    row = 0.3 + 0.7 * np.clip(up, 0, 1) ** 2
    return np.repeat(np.repeat(row[:, None, None], w, axis=1), 3, axis=2).astype(np.float32)


_BUILTIN_HDRI = {
    "sky": _sky,
    "studio": _studio,
    "constant": lambda: np.ones((4, 8, 3), dtype=np.float32),
}


def builtin_hdri(name: str) -> HdriMap:
    if name not in _BUILTIN_HDRI:
        raise AssetError(f"unknown builtin HDRI {name!r}; available: {sorted(_BUILTIN_HDRI)}")
    return HdriMap(_BUILTIN_HDRI[name](), name=f"builtin:{name}")
