"""Surface materials (metallic-roughness) and the random PBR distribution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

# random PBR distribution bounds
BASE_COLOR_RANGE = (0.05, 0.95)
ROUGHNESS_RANGE = (0.1, 1.0)
METALLIC_PROBABILITY = 0.3


@dataclass(frozen=True, eq=False)
class Material:
    """Single-layer diffuse + GGX material.

    ``specular`` scales dielectric reflectance (F0 = 0.08 * specular, so 0.5
    gives the usual 4%); a value of 0 with ``metallic`` 0 is pure Lambertian.
    ``texture`` is linear RGB (H, W, 3) multiplying ``base_color``.
    """

    base_color: tuple[float, float, float] = (0.8, 0.8, 0.8)
    roughness: float = 0.5
    metallic: float = 0.0
    specular: float = 0.5
    texture: Optional[np.ndarray] = None
    texture_ref: Optional[str] = None

    def __post_init__(self):
        for c in self.base_color:
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"base_color channel {c} outside [0, 1]")
        for name in ("roughness", "metallic", "specular"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} {v} outside [0, 1]")

    def to_record(self) -> dict:
        rec = {
            "base_color": [float(c) for c in self.base_color],
            "roughness": float(self.roughness),
            "metallic": float(self.metallic),
            "specular": float(self.specular),
        }
        if self.texture_ref:
            rec["texture"] = self.texture_ref
        return rec

    def same_parameters(self, other: "Material") -> bool:
        return self.to_record() == other.to_record()

    def __eq__(self, other):
        if not isinstance(other, Material):
            return NotImplemented
        return self.same_parameters(other)

    def __hash__(self):
        return hash(repr(self.to_record()))


def sample_random_pbr_material(rng: np.random.Generator) -> Material:
    """Base colour channels U[0.05, 0.95], roughness U[0.1, 1], metallic in {0, 1} with P(1) = 0.3."""
    color = rng.uniform(*BASE_COLOR_RANGE, size=3)
    roughness = rng.uniform(*ROUGHNESS_RANGE)
    metallic = 1.0 if rng.random() < METALLIC_PROBABILITY else 0.0
    return Material(base_color=tuple(float(c) for c in color), roughness=float(roughness),
                    metallic=metallic)


def material_from_record(rec: dict, texture=None) -> Material:
    return Material(
        base_color=tuple(float(c) for c in rec["base_color"]),
        roughness=float(rec["roughness"]),
        metallic=float(rec["metallic"]),
        specular=float(rec.get("specular", 0.5)),
        texture=texture,
        texture_ref=rec.get("texture"),
    )
