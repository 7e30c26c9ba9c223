"""Per-frame scene randomization.

Every frame draws from its own counter-based streams (see :mod:`streams`), so
scene ``k`` is reproducible without sampling scenes ``0..k-1`` first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .assets.catalog import AssetCatalog
from .assets.materials import Material, material_from_record, sample_random_pbr_material
from .config import AxisRanges, GenerationConfig, ScalarRange
from .errors import SamplingError
from .geometry import (
    euler_to_matrix,
    look_at_rotation,
    pose_matrix,
    spherical_direction,
    yaw_matrix,
)
from .streams import stream

log = logging.getLogger(__name__)

ROLES = ("target", "distractor", "fake")
LIGHT_NAMES = ("key", "fill", "rim")


def _tup(v) -> tuple[float, ...]:
    return tuple(float(x) for x in v)


@dataclass(frozen=True)
class AnchorSpec:
    position: tuple[float, float, float]
    yaw: float = 0.0
    radius: float = 0.0
    azimuth: float = 0.0
    elevation: float = 0.0

    @property
    def rotation(self) -> np.ndarray:
        return yaw_matrix(self.yaw)


@dataclass(frozen=True)
class CameraSpec:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float]
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    fstop: float
    sensor_width: float = 36.0
    distance: float = 0.0
    elevation: float = 0.0
    azimuth: float = 0.0

    @property
    def rotation(self) -> np.ndarray:
        """Camera-to-world rotation (+x right, +y down, +z forward)."""
        return look_at_rotation(self.position, self.look_at, self.up)

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def focal_mm(self) -> float:
        return self.fx * self.sensor_width / self.width

    def camera_to_world(self) -> np.ndarray:
        return pose_matrix(self.position, self.rotation)

    def world_to_camera(self) -> np.ndarray:
        R = self.rotation
        T = np.eye(4)
        T[:3, :3] = R.T
        T[:3, 3] = -R.T @ np.asarray(self.position)
        return T

    def to_camera(self, points) -> np.ndarray:
        R = self.rotation
        return (np.asarray(points, float) - np.asarray(self.position)) @ R

    def project(self, points) -> np.ndarray:
        pc = self.to_camera(points)
        return np.stack([self.fx * pc[..., 0] / pc[..., 2] + self.cx,
                         self.fy * pc[..., 1] / pc[..., 2] + self.cy], axis=-1)

    def box_in_frustum(self, corners, near: float = 1e-3) -> bool:
        """Conservative test: False only if all corners lie outside one frustum plane."""
        pc = self.to_camera(corners)
        x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
        planes = (
            z - near,
            self.fx * x + self.cx * z,
            (self.width - self.cx) * z - self.fx * x,
            self.fy * y + self.cy * z,
            (self.height - self.cy) * z - self.fy * y,
        )
        return not any(np.all(p < 0) for p in planes)


@dataclass(frozen=True)
class LightSpec:
    name: str
    position: tuple[float, float, float]
    direction: tuple[float, float, float]
    intensity: float
    color: tuple[float, float, float]
    size: float
    distance: float


@dataclass(frozen=True)
class LightRig:
    key: LightSpec
    fill: LightSpec
    rim: LightSpec

    @property
    def lights(self) -> tuple[LightSpec, LightSpec, LightSpec]:
        return (self.key, self.fill, self.rim)


@dataclass(frozen=True)
class ObjectInstanceSpec:
    instance_id: int
    role: str
    asset_key: str
    category_id: int
    offset: tuple[float, float, float]
    position: tuple[float, float, float]
    euler: tuple[float, float, float]
    material: Optional[Material] = None

    @property
    def rotation(self) -> np.ndarray:
        return euler_to_matrix(self.euler)

    def transform(self) -> np.ndarray:
        return pose_matrix(self.position, self.rotation)


@dataclass(frozen=True)
class SceneSpec:
    frame_index: int
    anchor: AnchorSpec
    camera: CameraSpec
    lights: LightRig
    hdri_index: int
    hdri_id: str
    background_scale: float
    plane_material_index: int
    instances: tuple[ObjectInstanceSpec, ...]
    requested_counts: dict = field(default_factory=dict)
    dropped: tuple[dict, ...] = ()
    retries: int = 0
    physics: Optional[dict] = None

    def instance(self, instance_id: int) -> ObjectInstanceSpec:
        for inst in self.instances:
            if inst.instance_id == instance_id:
                return inst
        raise KeyError(instance_id)


# ---------------------------------------------------------------- primitives


def sample_anchor(cfg: GenerationConfig, rng: np.random.Generator) -> AnchorSpec:
    a = cfg.anchor
    radius = a.radius.sample(rng)
    azimuth = 360.0 * rng.random()
    elevation = a.elevation.sample(rng)
    yaw = 360.0 * rng.random()
    pos = np.asarray(a.center, float) + radius * spherical_direction(azimuth, elevation)
    return AnchorSpec(position=_tup(pos), yaw=yaw, radius=radius, azimuth=azimuth, elevation=elevation)


def nominal_focal(cfg: GenerationConfig) -> float:
    w = cfg.camera.resolution[0]
    return 0.5 * w / np.tan(np.radians(cfg.camera.fov) / 2.0)


def sample_camera(cfg: GenerationConfig, anchor: AnchorSpec, rng: np.random.Generator) -> CameraSpec:
    c = cfg.camera
    if c.distance.min <= 0:
        raise SamplingError("camera.distance: range must exclude 0")
    distance = c.distance.sample(rng)
    elevation = c.elevation.sample(rng)
    azimuth = 360.0 * rng.random()
    fstop = c.fstop.sample(rng)
    w, h = c.resolution
    f = nominal_focal(cfg)
    fx = fy = f
    cx, cy = w / 2.0, h / 2.0
    if c.randomize_intrinsics:
        jf, jx, jy = (c.intrinsics_jitter.sample(rng) for _ in range(3))
        fx = fy = f * (1.0 + jf)
        cx *= 1.0 + jx
        cy *= 1.0 + jy
    target = np.asarray(anchor.position)
    pos = target + distance * spherical_direction(azimuth, elevation)
    return CameraSpec(position=_tup(pos), look_at=_tup(target), up=(0.0, 0.0, 1.0), fx=fx, fy=fy, cx=cx,
                      cy=cy, width=w, height=h, fstop=fstop, sensor_width=c.sensor_width, distance=distance,
                      elevation=elevation, azimuth=azimuth)


def sample_light_intensity(rng_range: ScalarRange, exponent: float, rng: np.random.Generator) -> float:
    """``E_min + (E_max - E_min) * u**(1/e)``; exponents above 1 favour bright lights."""
    if not exponent > 0:
        raise SamplingError(f"light exponent must be > 0, got {exponent}")
    u = rng.random()
    return rng_range.min + (rng_range.max - rng_range.min) * u ** (1.0 / exponent)


def sample_light_color(rng: np.random.Generator) -> tuple[float, float, float]:
    c = rng.uniform(0.5, 1.0, 3)
    return _tup(c / c.max())


def sample_light_rig(cfg: GenerationConfig, anchor: AnchorSpec, rng: np.random.Generator,
                     camera: Optional[CameraSpec] = None,
                     color_rng: Optional[np.random.Generator] = None) -> LightRig:
    """Key, fill and rim lights around the anchor.

    Light azimuths are offsets from the anchor-to-camera direction and
    elevations are absolute, so the rig turns with the viewpoint.
    """
    lc = cfg.lights
    base_az = camera.azimuth if camera is not None else anchor.yaw
    color_rng = color_rng if color_rng is not None else rng
    center = np.asarray(anchor.position)
    lights = []
    for name in LIGHT_NAMES:
        az_off, el = getattr(lc, name)
        d = lc.distance.sample(rng)
        E = sample_light_intensity(lc.intensity, lc.exponent, rng)
        color = sample_light_color(color_rng) if lc.color_randomization else (1.0, 1.0, 1.0)
        pos = center + d * spherical_direction(base_az + az_off, el)
        direction = (center - pos) / max(d, 1e-12) if d > 0 else np.array([0.0, 0.0, -1.0])
        lights.append(LightSpec(name=name, position=_tup(pos), direction=_tup(direction), intensity=E,
                                color=color, size=lc.size, distance=d))
    return LightRig(*lights)


def _axis_sample(ranges: AxisRanges, rng) -> np.ndarray:
    return np.array([r.sample(rng) for r in ranges.axes()])


def sample_count(r: ScalarRange, rng) -> int:
    lo, hi = int(np.ceil(r.min)), int(np.floor(r.max))
    if hi < lo:
        return lo
    return int(rng.integers(lo, hi + 1))


def sample_pose(cfg: GenerationConfig, role: str, anchor: AnchorSpec, rng):
    sp = cfg.spawn
    ranges = sp.distractor_offset if role == "distractor" and sp.distractor_offset is not None \
        else sp.position_offset
    offset = _axis_sample(ranges, rng)
    euler = _axis_sample(sp.orientation, rng)
    pos = np.asarray(anchor.position) + anchor.rotation @ offset
    return _tup(offset), _tup(pos), _tup(euler)


def sample_instances(cfg: GenerationConfig, catalog: AssetCatalog, anchor: AnchorSpec,
                     rng: np.random.Generator, material_rng: Optional[np.random.Generator] = None
                     ) -> list[ObjectInstanceSpec]:
    """Draw counts, assets and poses; instance ids are ``1..k`` in draw order."""
    sp = cfg.spawn
    counts = {"target": sample_count(sp.target_count, rng),
              "distractor": sample_count(sp.distractor_count, rng),
              "fake": sample_count(sp.fake_count, rng)}
    out: list[ObjectInstanceSpec] = []
    next_id = 1
    for role in ROLES:
        n = counts[role]
        if n == 0:
            continue
        assets = catalog.pool(role)
        slots = [a for a in assets for _ in range(a.copies)]
        if n > len(slots):
            raise SamplingError(f"spawn.{role}_count: {n} requested but the catalog holds {len(slots)} "
                                f"{role} instances (assets x copies)")
        picks = rng.choice(len(slots), size=n, replace=False)
        for p in picks:
            asset = slots[int(p)]
            offset, pos, euler = sample_pose(cfg, role, anchor, rng)
            mat = None
            if cfg.random_pbr_materials and role == "target" and material_rng is not None:
                mat = sample_random_pbr_material(material_rng)
            out.append(ObjectInstanceSpec(instance_id=next_id, role=role, asset_key=asset.key,
                                          category_id=asset.category_id if role == "target" else 0,
                                          offset=offset, position=pos, euler=euler, material=mat))
            next_id += 1
    return out


# ---------------------------------------------------------------- scenes


def hdri_for_batch(cfg: GenerationConfig, catalog: AssetCatalog, frame_index: int) -> int:
    if not cfg.background.enabled or not catalog.hdris:
        return -1
    batch = frame_index // cfg.hdri_batch_size
    return int(stream(cfg.seed, batch, "hdri").integers(len(catalog.hdris)))


def sample_scene(cfg: GenerationConfig, catalog: AssetCatalog, frame_index: int) -> SceneSpec:
    """Resolve frame ``frame_index`` (placement and, if enabled, settling included)."""
    from .physics import place_collision_free, settle, settle_params_from_config

    seed = cfg.seed
    proxies = {a.key: a.proxy for g in (catalog.targets, catalog.distractors, catalog.fakes) for a in g}
    last_dropped: list[dict] = []
    for retry in range(cfg.spawn.max_scene_retries + 1):
        anchor = sample_anchor(cfg, stream(seed, frame_index, "anchor", retry))
        camera = sample_camera(cfg, anchor, stream(seed, frame_index, "camera", retry))
        rig = sample_light_rig(cfg, anchor, stream(seed, frame_index, "lights", retry), camera=camera,
                               color_rng=stream(seed, frame_index, "light_color", retry))
        drawn = sample_instances(cfg, catalog, anchor, stream(seed, frame_index, "instances", retry),
                                 material_rng=stream(seed, frame_index, "materials", retry))

        def resample(inst, rng, _anchor=anchor):
            offset, pos, euler = sample_pose(cfg, inst.role, _anchor, rng)
            return replace(inst, offset=offset, position=pos, euler=euler)

        placed, dropped = place_collision_free(
            drawn, proxies, cfg.spawn.max_attempts, stream(seed, frame_index, "placement", retry),
            camera=camera, resample=resample, ground=cfg.plane.enabled or cfg.physics_enabled)
        last_dropped = dropped
        if placed or not drawn:
            break
        log.warning("frame %d: no instance survived placement, resampling (retry %d)", frame_index, retry + 1)
    else:
        raise SamplingError(f"frame {frame_index}: no instance could be placed after "
                            f"{cfg.spawn.max_scene_retries} scene retries ({len(last_dropped)} dropped)")
    counts = {r: sum(1 for i in drawn if i.role == r) for r in ROLES}
    hdri_index = hdri_for_batch(cfg, catalog, frame_index)
    bg_scale = cfg.background_light_scale.sample(stream(seed, frame_index, "background"))
    plane_index = -1
    if cfg.plane.enabled:
        if not catalog.plane_materials:
            raise SamplingError("plane.materials: empty plane-material pool")
        plane_index = int(stream(seed, frame_index, "plane").integers(len(catalog.plane_materials)))
    scene = SceneSpec(frame_index=frame_index, anchor=anchor, camera=camera, lights=rig,
                      hdri_index=hdri_index, hdri_id=catalog.hdri_ids[hdri_index] if hdri_index >= 0 else "",
                      background_scale=bg_scale, plane_material_index=plane_index, instances=tuple(placed),
                      requested_counts=counts, dropped=tuple(dropped), retries=retry)
    if cfg.physics_enabled:
        scene = settle(scene, proxies, settle_params_from_config(cfg))
    return scene


def sample_run(cfg: GenerationConfig, catalog: AssetCatalog) -> list[SceneSpec]:
    """One :class:`SceneSpec` per frame index ``0..scene_count-1``."""
    if cfg.background.enabled and not catalog.hdris:
        raise SamplingError("background.hdris: empty HDRI pool while the background is enabled")
    if cfg.plane.enabled and not catalog.plane_materials:
        raise SamplingError("plane.materials: empty plane-material pool")
    return [sample_scene(cfg, catalog, k) for k in range(cfg.scene_count)]


# ---------------------------------------------------------------- serialization


def scene_to_dict(scene: SceneSpec) -> dict:
    def light(l: LightSpec):
        return {"name": l.name, "position": list(l.position), "direction": list(l.direction),
                "intensity": l.intensity, "color": list(l.color), "size": l.size, "distance": l.distance}

    c = scene.camera
    return {
        "frame_index": scene.frame_index,
        "anchor": {"position": list(scene.anchor.position), "yaw": scene.anchor.yaw,
                   "radius": scene.anchor.radius, "azimuth": scene.anchor.azimuth,
                   "elevation": scene.anchor.elevation},
        "camera": {"position": list(c.position), "look_at": list(c.look_at), "up": list(c.up), "fx": c.fx,
                   "fy": c.fy, "cx": c.cx, "cy": c.cy, "width": c.width, "height": c.height,
                   "fstop": c.fstop, "sensor_width": c.sensor_width, "distance": c.distance,
                   "elevation": c.elevation, "azimuth": c.azimuth},
        "lights": [light(l) for l in scene.lights.lights],
        "hdri_index": scene.hdri_index,
        "hdri_id": scene.hdri_id,
        "background_scale": scene.background_scale,
        "plane_material_index": scene.plane_material_index,
        "instances": [{"instance_id": i.instance_id, "role": i.role, "asset_key": i.asset_key,
                       "category_id": i.category_id, "offset": list(i.offset), "position": list(i.position),
                       "euler": list(i.euler),
                       "material": i.material.to_record() if i.material is not None else None}
                      for i in scene.instances],
        "requested_counts": dict(scene.requested_counts),
        "dropped": list(scene.dropped),
        "retries": scene.retries,
        "physics": scene.physics,
    }


def scene_from_dict(d: dict) -> SceneSpec:
    a = d["anchor"]
    c = d["camera"]
    lights = [LightSpec(name=l["name"], position=_tup(l["position"]), direction=_tup(l["direction"]),
                        intensity=l["intensity"], color=_tup(l["color"]), size=l["size"],
                        distance=l["distance"]) for l in d["lights"]]
    return SceneSpec(
        frame_index=d["frame_index"],
        anchor=AnchorSpec(position=_tup(a["position"]), yaw=a["yaw"], radius=a["radius"],
                          azimuth=a["azimuth"], elevation=a["elevation"]),
        camera=CameraSpec(position=_tup(c["position"]), look_at=_tup(c["look_at"]), up=_tup(c["up"]),
                          fx=c["fx"], fy=c["fy"], cx=c["cx"], cy=c["cy"], width=c["width"],
                          height=c["height"], fstop=c["fstop"], sensor_width=c["sensor_width"],
                          distance=c["distance"], elevation=c["elevation"], azimuth=c["azimuth"]),
        lights=LightRig(*lights),
        hdri_index=d["hdri_index"],
        hdri_id=d["hdri_id"],
        background_scale=d["background_scale"],
        plane_material_index=d["plane_material_index"],
        instances=tuple(ObjectInstanceSpec(
            instance_id=i["instance_id"], role=i["role"], asset_key=i["asset_key"],
            category_id=i["category_id"], offset=_tup(i["offset"]), position=_tup(i["position"]),
            euler=_tup(i["euler"]),
            material=material_from_record(i["material"]) if i.get("material") else None)
            for i in d["instances"]),
        requested_counts=dict(d.get("requested_counts", {})),
        dropped=tuple(d.get("dropped", ())),
        retries=d.get("retries", 0),
        physics=d.get("physics"),
    )
