"""Flattening meshes, materials, lights and the environment into kernel arrays."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..assets.materials import Material
from ..assets.mesh import Mesh, quad
from ..geometry import look_at_rotation
from .bvh import Bvh, build_bvh

PLANE_INSTANCE_ID = 65535
DEFAULT_MATERIAL = Material(base_color=(0.7, 0.7, 0.7), roughness=0.6)


@dataclass
class Camera:
    position: np.ndarray
    rotation: np.ndarray  # camera-to-world, columns right/down/forward
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    lens_radius: float = 0.0
    focus_distance: float = 1.0

    @classmethod
    def from_spec(cls, spec, depth_of_field: bool = False) -> "Camera":
        lens = 0.0
        if depth_of_field:
            lens = 0.5 * spec.focal_mm / spec.fstop / 1000.0
        return cls(position=np.asarray(spec.position, float), rotation=spec.rotation, fx=spec.fx, fy=spec.fy,
                   cx=spec.cx, cy=spec.cy, width=spec.width, height=spec.height, lens_radius=lens,
                   focus_distance=max(spec.distance, 1e-6))

    @classmethod
    def looking_at(cls, position, target, width: int, height: int, fov_deg: float = 40.0) -> "Camera":
        f = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
        return cls(position=np.asarray(position, float), rotation=look_at_rotation(position, target),
                   fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height,
                   focus_distance=float(np.linalg.norm(np.subtract(target, position))))


class Environment:
    """Scaled equirectangular radiance plus its sampling tables."""

    def __init__(self, radiance: Optional[np.ndarray], scale: float = 1.0):
        if radiance is None:
            self.radiance = np.zeros((1, 2, 3))
            self.enabled = False
        else:
            self.radiance = np.ascontiguousarray(np.asarray(radiance, np.float64) * scale)
            self.enabled = bool(self.radiance.max() > 0)
        h, w = self.radiance.shape[:2]
        self.uniform = bool(np.all(self.radiance == self.radiance[0, 0]))
        lum = self.radiance @ np.array([0.2126, 0.7152, 0.0722])
        sin_t = np.sin(np.pi * (np.arange(h) + 0.5) / h)
        weight = lum * sin_t[:, None]
        row = weight.sum(axis=1)
        total = row.sum()
        if total > 0:
            self.marg_pdf = row / total
            cond = np.where(row[:, None] > 0, weight / np.where(row[:, None] > 0, row[:, None], 1.0), 1.0 / w)
        else:
            self.marg_pdf = np.full(h, 1.0 / h)
            cond = np.full((h, w), 1.0 / w)
        self.cond_pdf = np.ascontiguousarray(cond)
        self.marg_cdf = np.concatenate([[0.0], np.cumsum(self.marg_pdf)])
        self.marg_cdf[-1] = 1.0
        self.cond_cdf = np.concatenate([np.zeros((h, 1)), np.cumsum(cond, axis=1)], axis=1)
        self.cond_cdf[:, -1] = 1.0

    @property
    def max_radiance(self) -> float:
        return float(self.radiance.max()) if self.enabled else 0.0

    @property
    def mean_radiance(self) -> float:
        return float(self.radiance.mean()) if self.enabled else 0.0


class RenderScene:
    """Triangles with per-triangle material and ids, area lights and an environment."""

    def __init__(self, camera: Camera):
        self.camera = camera
        self._v: list[np.ndarray] = []
        self._n: list[np.ndarray] = []
        self._uv: list[np.ndarray] = []
        self._mat: list[np.ndarray] = []
        self._inst: list[np.ndarray] = []
        self._cat: list[np.ndarray] = []
        self.materials: list[Material] = []
        self._mat_index: dict[int, int] = {}
        self.lights: list[tuple] = []  # (center, u, v, normal, radiance, area)
        self.environment = Environment(None)
        self._bvh: Optional[Bvh] = None
        self.instance_categories: dict[int, int] = {}

    # ---- content

    def material_index(self, mat: Optional[Material]) -> int:
        mat = mat if mat is not None else DEFAULT_MATERIAL
        key = id(mat)
        if key not in self._mat_index:
            self._mat_index[key] = len(self.materials)
            self.materials.append(mat)
        return self._mat_index[key]

    def add_mesh(self, mesh: Mesh, transform=None, material: Optional[Material] = None, instance_id: int = 1,
                 category_id: int = 0) -> None:
        T = np.eye(4) if transform is None else np.asarray(transform, float)
        R, t = T[:3, :3], T[:3, 3]
        verts = mesh.vertices @ R.T + t
        normal_m = np.linalg.inv(R).T
        normals = mesh.normals @ normal_m.T
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        f = mesh.faces
        uvs = mesh.uvs if mesh.uvs is not None else np.zeros((mesh.n_vertices, 2))
        m = self.material_index(material if material is not None else mesh.material)
        self._v.append(verts[f])
        self._n.append(normals[f])
        self._uv.append(uvs[f])
        k = f.shape[0]
        self._mat.append(np.full(k, m, np.int64))
        self._inst.append(np.full(k, instance_id, np.int64))
        self._cat.append(np.full(k, category_id, np.int64))
        self.instance_categories[instance_id] = category_id
        self._bvh = None

    def add_area_light(self, center, normal, size: float, radiance) -> None:
        """Square one-sided emitter of side ``size`` facing ``normal``."""
        n = np.asarray(normal, float)
        n = n / np.linalg.norm(n)
        helper = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        u = np.cross(n, helper)
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        half = 0.5 * size
        self.lights.append((np.asarray(center, float), u * half, v * half, n,
                            np.asarray(radiance, float), size * size))

    def set_environment(self, radiance: Optional[np.ndarray], scale: float = 1.0) -> None:
        self.environment = Environment(radiance, scale)

    # ---- kernel arrays

    @property
    def n_triangles(self) -> int:
        return int(sum(a.shape[0] for a in self._v))

    def triangles(self) -> np.ndarray:
        return np.concatenate(self._v) if self._v else np.zeros((0, 3, 3))

    def bvh(self) -> Bvh:
        if self._bvh is None:
            self._bvh = build_bvh(self.triangles()) if self._v else _empty_bvh()
        return self._bvh

    def geometry_arrays(self):
        if not self._v:
            return (np.zeros((1, 3, 3)), np.zeros((1, 3, 2)), np.zeros(1, np.int64), np.zeros(1, np.int64),
                    np.zeros(1, np.int64))
        return (np.ascontiguousarray(np.concatenate(self._n)), np.ascontiguousarray(np.concatenate(self._uv)),
                np.concatenate(self._mat), np.concatenate(self._inst), np.concatenate(self._cat))

    def material_arrays(self):
        mats = self.materials or [DEFAULT_MATERIAL]
        base = np.array([m.base_color for m in mats], float)
        rough = np.array([m.roughness for m in mats], float)
        metal = np.array([m.metallic for m in mats], float)
        spec = np.array([m.specular for m in mats], float)
        tex_idx = np.full(len(mats), -1, np.int64)
        chunks, offs, ws, hs = [], [], [], []
        offset = 0
        for i, m in enumerate(mats):
            if m.texture is not None:
                tex = np.ascontiguousarray(m.texture, np.float64)[..., :3]
                tex_idx[i] = len(offs)
                offs.append(offset)
                hs.append(tex.shape[0])
                ws.append(tex.shape[1])
                chunks.append(tex.reshape(-1))
                offset += tex.size
        data = np.concatenate(chunks) if chunks else np.zeros(3)
        return (base, rough, metal, spec, tex_idx, data, np.array(offs or [0], np.int64),
                np.array(ws or [1], np.int64), np.array(hs or [1], np.int64))

    def light_arrays(self):
        if not self.lights:
            z = np.zeros((0, 3))
            return z, z.copy(), z.copy(), z.copy(), z.copy(), np.zeros(0)
        cols = list(zip(*self.lights))
        return tuple(np.ascontiguousarray(np.array(c, float)) for c in cols)

    def max_expected_radiance(self) -> float:
        """Upper scale of outgoing radiance: the brightest environment texel or a
        white diffuser lit by every light plus the mean environment."""
        env = self.environment
        irr = sum(float(rad.max()) * area / max(_dist2(c, self.camera), 1e-12) for c, _, _, _, rad, area
                  in self.lights)
        return max(env.max_radiance, (irr + np.pi * env.mean_radiance) / np.pi)


def _dist2(center, camera: Camera) -> float:
    # lights are aimed at the anchor, which the camera looks at
    anchor = camera.position + camera.rotation[:, 2] * camera.focus_distance
    return float(np.sum((np.asarray(center) - anchor) ** 2))


def _empty_bvh() -> Bvh:
    return Bvh(node_min=np.full((1, 3), np.inf), node_max=np.full((1, 3), -np.inf),
               left=np.full(1, -1, np.int64), right=np.full(1, -1, np.int64), start=np.zeros(1, np.int64),
               count=np.zeros(1, np.int64), order=np.zeros(0, np.int64), triangles=np.zeros((1, 3, 3)))


def light_radiance(spec) -> np.ndarray:
    """Radiance of a square emitter producing irradiance ``E`` at the anchor, ``L = E d^2 / A``."""
    area = spec.size * spec.size
    return np.asarray(spec.color, float) * spec.intensity * spec.distance ** 2 / area


def build_render_scene(scene, catalog, plane_size: float = 20.0, depth_of_field: bool = False) -> RenderScene:
    """Geometry, materials, lights and environment for a sampled scene."""
    rs = RenderScene(Camera.from_spec(scene.camera, depth_of_field))
    for inst in scene.instances:
        asset = catalog.asset(inst.asset_key)
        T = inst.transform()
        for part in asset.parts:
            rs.add_mesh(part, T, inst.material if inst.material is not None else part.material,
                        instance_id=inst.instance_id, category_id=inst.category_id)
    if scene.plane_material_index >= 0:
        rs.add_mesh(quad(plane_size), None, catalog.plane_materials[scene.plane_material_index],
                    instance_id=PLANE_INSTANCE_ID, category_id=0)
    for l in scene.lights.lights:
        rs.add_area_light(l.position, l.direction, l.size, light_radiance(l))
    if scene.hdri_index >= 0:
        h = catalog.hdris[scene.hdri_index]
        rs.set_environment(h.radiance, h.intensity_scale * scene.background_scale)
    return rs
