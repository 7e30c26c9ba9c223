"""Generation configuration: schema, TOML parsing, validation and defaults.

A run is fully described by one :class:`GenerationConfig`. The on-disk form
is TOML; every table maps onto one of the frozen dataclasses below and field
names are identical in both. Units: metres, degrees, W/m^2 for light
irradiance. See ``docs/config.md`` for the full schema reference.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Union, get_args, get_origin, get_type_hints

import tomli
import tomli_w

from .errors import ConfigError, FrameIntervalError

PASSES = ("rgb", "depth", "normal", "instance_seg", "semantic_seg")


@dataclass(frozen=True)
class ScalarRange:
    """Closed interval ``[min, max]``; a point range fixes the value."""

    min: float
    max: float

    @classmethod
    def point(cls, value: float) -> "ScalarRange":
        return cls(float(value), float(value))

    @property
    def is_point(self) -> bool:
        return self.min == self.max

    def contains(self, value: float) -> bool:
        return self.min <= value <= self.max

    def sample(self, rng) -> float:
        # always consumes one draw so point ranges keep streams aligned
        u = rng.random()
        return float(self.min + (self.max - self.min) * u)


@dataclass(frozen=True)
class AxisRanges:
    """Independent ranges per axis (offsets in metres, Euler angles in degrees)."""

    x: ScalarRange
    y: ScalarRange
    z: ScalarRange

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "AxisRanges":
        r = ScalarRange(float(lo), float(hi))
        return cls(r, r, r)

    def axes(self) -> tuple[ScalarRange, ScalarRange, ScalarRange]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class MaterialConfig:
    base_color: tuple[float, float, float] = (0.8, 0.8, 0.8)
    roughness: float = 0.5
    metallic: float = 0.0
    specular: float = 0.5
    texture: Optional[str] = None


@dataclass(frozen=True)
class AssetConfig:
    """One mesh asset plus its object settings (merge, scale, copies)."""

    path: str
    name: str = ""
    category_id: int = 0
    join_children: bool = True
    scale: float = 1.0
    copies: int = 1
    material: Optional[MaterialConfig] = None


@dataclass(frozen=True)
class AnchorConfig:
    center: tuple[float, float, float] = (0.0, 0.0, 0.3)
    radius: ScalarRange = ScalarRange(0.0, 0.2)
    elevation: ScalarRange = ScalarRange(-90.0, 90.0)


@dataclass(frozen=True)
class CameraConfig:
    elevation: ScalarRange = ScalarRange(25.0, 65.0)
    distance: ScalarRange = ScalarRange(1.2, 2.0)
    # placeholder range, not a measured default
    fstop: ScalarRange = ScalarRange(2.8, 16.0)
    fov: float = 50.0
    sensor_width: float = 36.0
    resolution: tuple[int, int] = (128, 128)
    randomize_intrinsics: bool = False
    intrinsics_jitter: ScalarRange = ScalarRange(-0.05, 0.05)


@dataclass(frozen=True)
class LightsConfig:
    distance: ScalarRange = ScalarRange(2.0, 3.0)
    intensity: ScalarRange = ScalarRange(0.5, 2.0)
    exponent: float = 1.0
    color_randomization: bool = False
    size: float = 0.5
    # (azimuth offset from the anchor->camera direction, elevation), degrees
    key: tuple[float, float] = (45.0, 30.0)
    fill: tuple[float, float] = (-60.0, 15.0)
    rim: tuple[float, float] = (180.0, 45.0)


@dataclass(frozen=True)
class SpawnConfig:
    target_count: ScalarRange = ScalarRange(1.0, 1.0)
    distractor_count: ScalarRange = ScalarRange(0.0, 0.0)
    fake_count: ScalarRange = ScalarRange(0.0, 0.0)
    position_offset: AxisRanges = AxisRanges.uniform(-0.25, 0.25)
    orientation: AxisRanges = AxisRanges.uniform(-180.0, 180.0)
    distractor_offset: Optional[AxisRanges] = None
    max_attempts: int = 50
    max_scene_retries: int = 10


@dataclass(frozen=True)
class FakesConfig:
    amplitude: float = 0.1
    deform_targets: bool = True


@dataclass(frozen=True)
class BackgroundConfig:
    enabled: bool = True
    hdris: tuple[str, ...] = ("builtin:sky",)
    hdri_dir: Optional[str] = None


@dataclass(frozen=True)
class PlaneConfig:
    enabled: bool = True
    size: float = 20.0
    materials: tuple[MaterialConfig, ...] = (
        MaterialConfig(base_color=(0.5, 0.5, 0.5), roughness=0.8),
        MaterialConfig(base_color=(0.35, 0.32, 0.3), roughness=0.6),
        MaterialConfig(base_color=(0.7, 0.7, 0.72), roughness=0.4),
    )


@dataclass(frozen=True)
class RenderConfig:
    spp: int = 16
    max_depth: int = 4
    tile_size: int = 16
    clamp: float = 0.0
    depth_of_field: bool = False


@dataclass(frozen=True)
class SettleConfig:
    gravity: float = 9.81
    timestep: float = 1.0 / 240.0
    max_steps: int = 2400
    rest_threshold: float = 1e-3
    restitution: float = 0.0
    friction: float = 0.5


@dataclass(frozen=True)
class AnnotateConfig:
    min_pixels: int = 16


def _default_targets() -> tuple[AssetConfig, ...]:
    return (AssetConfig(path="builtin:cube", name="cube", category_id=1, scale=0.2,
                        material=MaterialConfig(base_color=(0.8, 0.25, 0.1), roughness=0.4)),)


@dataclass(frozen=True)
class GenerationConfig:
    scene_count: int = 4
    seed: int = 0
    render_start: int = 0
    render_end: int = 3
    output_passes: tuple[str, ...] = PASSES
    physics_enabled: bool = False
    background_light_scale: ScalarRange = ScalarRange(1.0, 1.0)
    hdri_batch_size: int = 4
    random_pbr_materials: bool = False
    anchor: AnchorConfig = AnchorConfig()
    camera: CameraConfig = CameraConfig()
    lights: LightsConfig = LightsConfig()
    spawn: SpawnConfig = SpawnConfig()
    fakes: FakesConfig = FakesConfig()
    background: BackgroundConfig = BackgroundConfig()
    plane: PlaneConfig = PlaneConfig()
    render: RenderConfig = RenderConfig()
    settle: SettleConfig = SettleConfig()
    annotate: AnnotateConfig = AnnotateConfig()
    targets: tuple[AssetConfig, ...] = field(default_factory=_default_targets)
    distractors: tuple[AssetConfig, ...] = ()
    fake_assets: tuple[AssetConfig, ...] = ()

    def replace(self, **changes) -> "GenerationConfig":
        return dataclasses.replace(self, **changes)


def default_config() -> GenerationConfig:
    """Valid single-target configuration with every ablation switch off."""
    return GenerationConfig()


# --------------------------------------------------------------------------
# parsing


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _as_float(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _as_range(value, path) -> ScalarRange:
    if isinstance(value, dict):
        extra = set(value) - {"min", "max"}
        if extra:
            _fail(path, f"unknown key {sorted(extra)[0]!r} in range")
        if not {"min", "max"} <= set(value):
            _fail(path, "range table needs both 'min' and 'max'")
        return ScalarRange(_as_float(value["min"], path + ".min"), _as_float(value["max"], path + ".max"))
    if isinstance(value, list):
        if len(value) != 2:
            _fail(path, f"range must have 2 elements, got {len(value)}")
        return ScalarRange(_as_float(value[0], path + "[0]"), _as_float(value[1], path + "[1]"))
    return ScalarRange.point(_as_float(value, path))


def _as_axes(value, path) -> AxisRanges:
    if isinstance(value, dict):
        extra = set(value) - {"x", "y", "z"}
        if extra:
            _fail(path, f"unknown key {sorted(extra)[0]!r}; expected x, y, z")
        missing = {"x", "y", "z"} - set(value)
        if missing:
            _fail(path, f"missing axis {sorted(missing)[0]!r}")
        return AxisRanges(*(_as_range(value[a], f"{path}.{a}") for a in "xyz"))
    r = _as_range(value, path)
    return AxisRanges(r, r, r)


def _convert(value, tp, path):
    origin = get_origin(tp)
    if origin is Union:
        args = [a for a in get_args(tp) if a is not type(None)]
        return _convert(value, args[0], path)
    if tp is bool:
        if not isinstance(value, bool):
            _fail(path, f"expected a boolean, got {type(value).__name__}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(path, f"expected an integer, got {type(value).__name__}")
        return value
    if tp is float:
        return _as_float(value, path)
    if tp is str:
        if not isinstance(value, str):
            _fail(path, f"expected a string, got {type(value).__name__}")
        return value
    if tp is ScalarRange:
        return _as_range(value, path)
    if tp is AxisRanges:
        return _as_axes(value, path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            _fail(path, f"expected a table, got {type(value).__name__}")
        return _build(tp, value, path)
    if origin is tuple:
        args = get_args(tp)
        if not isinstance(value, list):
            _fail(path, f"expected an array, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            _fail(path, f"expected {len(args)} elements, got {len(value)}")
        return tuple(_convert(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    raise TypeError(f"unsupported schema type {tp!r}")  # pragma: no cover


def _build(cls, table: dict, path: str):
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in table:
        if key not in names:
            where = f"{path}.{key}" if path else key
            _fail(where, "unknown key")
    kwargs = {}
    for name in sorted(table):
        where = f"{path}.{name}" if path else name
        kwargs[name] = _convert(table[name], hints[name], where)
    return cls(**kwargs)


def parse_config(text: str) -> GenerationConfig:
    """Parse a TOML document into a validated :class:`GenerationConfig`.

    Missing keys take their defaults; ``render_end`` defaults to the last
    scene. Raises :class:`ConfigError` (syntax, unknown key, type mismatch or
    range violation) or :class:`FrameIntervalError` for a bad interval.
    """
    try:
        table = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    if "render_end" not in table and isinstance(table.get("scene_count"), int) \
            and not isinstance(table.get("scene_count"), bool):
        table["render_end"] = table["scene_count"] - 1
    cfg = _build(GenerationConfig, table, "")
    raise_for_violations(cfg)
    return cfg


def load_config(path) -> GenerationConfig:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8 ({exc.reason} at byte {exc.start})") from None
    return parse_config(text)


def _to_plain(value):
    if isinstance(value, ScalarRange):
        return [value.min, value.max]
    if isinstance(value, AxisRanges):
        return {a: _to_plain(r) for a, r in zip("xyz", value.axes())}
    if dataclasses.is_dataclass(value):
        out = {}
        for f in dataclasses.fields(value):
            v = getattr(value, f.name)
            if v is None:
                continue
            out[f.name] = _to_plain(v)
        return out
    if isinstance(value, tuple):
        return [_to_plain(v) for v in value]
    return value


def config_to_dict(cfg: GenerationConfig) -> dict[str, Any]:
    return _to_plain(cfg)


def serialize_config(cfg: GenerationConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def config_from_dict(table: dict) -> GenerationConfig:
    return _build(GenerationConfig, table, "")


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    field: str
    message: str
    kind: str = "range"

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


def _check_range(out, name, r: ScalarRange, lo=None, hi=None, lo_strict=False, unit=""):
    if not (math.isfinite(r.min) and math.isfinite(r.max)):
        out.append(Violation(name, f"range [{r.min}, {r.max}] must be finite"))
        return
    if r.min > r.max:
        out.append(Violation(name, f"min {r.min} exceeds max {r.max}"))
    if lo is not None:
        if lo_strict and r.min <= lo:
            out.append(Violation(name + ".min", f"{r.min} must be > {lo}{unit}"))
        elif not lo_strict and r.min < lo:
            out.append(Violation(name + ".min", f"{r.min} is below the lower bound {lo}{unit}"))
    if hi is not None and r.max > hi:
        out.append(Violation(name + ".max", f"{r.max} is above the upper bound {hi}{unit}"))


def _check_count(out, name, r: ScalarRange):
    _check_range(out, name, r, lo=0.0)
    for v, side in ((r.min, "min"), (r.max, "max")):
        if math.isfinite(v) and v != int(v):
            out.append(Violation(f"{name}.{side}", f"count bound {v} must be an integer"))


def _check_material(out, name, m: MaterialConfig):
    for i, c in enumerate(m.base_color):
        if not (0.0 <= c <= 1.0):
            out.append(Violation(f"{name}.base_color[{i}]", f"{c} outside [0, 1]"))
    for attr in ("roughness", "metallic", "specular"):
        v = getattr(m, attr)
        if not (0.0 <= v <= 1.0):
            out.append(Violation(f"{name}.{attr}", f"{v} outside [0, 1]"))


def _check_assets(out, name, assets, annotated: bool):
    for i, a in enumerate(assets):
        where = f"{name}[{i}]"
        if not a.path:
            out.append(Violation(where + ".path", "must not be empty"))
        if not (a.scale > 0 and math.isfinite(a.scale)):
            out.append(Violation(where + ".scale", f"{a.scale} must be > 0"))
        if a.copies < 1:
            out.append(Violation(where + ".copies", f"{a.copies} must be >= 1"))
        if annotated and a.category_id < 0:
            out.append(Violation(where + ".category_id", f"{a.category_id} must be >= 1 (0 = auto)"))
        if a.material is not None:
            _check_material(out, where + ".material", a.material)


def validate_config(cfg: GenerationConfig) -> list[Violation]:
    """Check every invariant of ``cfg``; an empty list means valid."""
    out: list[Violation] = []
    n = cfg.scene_count
    if n < 1:
        out.append(Violation("scene_count", f"{n} must be >= 1"))
    if not (0 <= cfg.render_start <= cfg.render_end <= n - 1):
        out.append(Violation(
            "render_start/render_end",
            f"interval [{cfg.render_start}, {cfg.render_end}] violates "
            f"0 <= start <= end <= scene_count - 1 = {n - 1}", kind="frame_interval"))
    if not cfg.output_passes:
        out.append(Violation("output_passes", "at least one pass is required"))
    for p in cfg.output_passes:
        if p not in PASSES:
            out.append(Violation("output_passes", f"unknown pass {p!r}; expected one of {list(PASSES)}"))
    if len(set(cfg.output_passes)) != len(cfg.output_passes):
        out.append(Violation("output_passes", "duplicate pass names"))
    _check_range(out, "background_light_scale", cfg.background_light_scale, lo=0.0)
    if cfg.hdri_batch_size < 1:
        out.append(Violation("hdri_batch_size", f"{cfg.hdri_batch_size} must be >= 1"))

    a = cfg.anchor
    if not all(math.isfinite(c) for c in a.center):
        out.append(Violation("anchor.center", "must be finite"))
    _check_range(out, "anchor.radius", a.radius, lo=0.0, unit=" m")
    _check_range(out, "anchor.elevation", a.elevation, lo=-90.0, hi=90.0, unit=" deg")

    c = cfg.camera
    _check_range(out, "camera.elevation", c.elevation, lo=-90.0, hi=90.0, unit=" deg")
    _check_range(out, "camera.distance", c.distance, lo=0.0, lo_strict=True, unit=" m")
    _check_range(out, "camera.fstop", c.fstop, lo=0.0, lo_strict=True)
    _check_range(out, "camera.intrinsics_jitter", c.intrinsics_jitter, lo=-1.0, lo_strict=True)
    if not (0.0 < c.fov < 180.0):
        out.append(Violation("camera.fov", f"{c.fov} must lie in (0, 180) deg"))
    if not c.sensor_width > 0:
        out.append(Violation("camera.sensor_width", f"{c.sensor_width} must be > 0 mm"))
    if c.resolution[0] < 1 or c.resolution[1] < 1:
        out.append(Violation("camera.resolution", f"{list(c.resolution)} must be >= 1 pixel per axis"))

    li = cfg.lights
    _check_range(out, "lights.distance", li.distance, lo=0.0, unit=" m")
    _check_range(out, "lights.intensity", li.intensity, lo=0.0, unit=" W/m^2")
    if not (li.exponent > 0 and math.isfinite(li.exponent)):
        out.append(Violation("lights.exponent", f"{li.exponent} must be > 0 (e = 0 is undefined)"))
    if not li.size > 0:
        out.append(Violation("lights.size", f"{li.size} must be > 0 m"))
    for name in ("key", "fill", "rim"):
        el = getattr(li, name)[1]
        if not (-90.0 <= el <= 90.0):
            out.append(Violation(f"lights.{name}[1]", f"elevation {el} outside [-90, 90] deg"))

    s = cfg.spawn
    _check_count(out, "spawn.target_count", s.target_count)
    _check_count(out, "spawn.distractor_count", s.distractor_count)
    _check_count(out, "spawn.fake_count", s.fake_count)
    for ax, r in zip("xyz", s.position_offset.axes()):
        _check_range(out, f"spawn.position_offset.{ax}", r, unit=" m")
    if s.distractor_offset is not None:
        for ax, r in zip("xyz", s.distractor_offset.axes()):
            _check_range(out, f"spawn.distractor_offset.{ax}", r, unit=" m")
    for ax, r in zip("xyz", s.orientation.axes()):
        _check_range(out, f"spawn.orientation.{ax}", r, lo=-180.0, hi=180.0, unit=" deg")
    if s.max_attempts < 1:
        out.append(Violation("spawn.max_attempts", f"{s.max_attempts} must be >= 1"))
    if s.max_scene_retries < 0:
        out.append(Violation("spawn.max_scene_retries", f"{s.max_scene_retries} must be >= 0"))

    if not (cfg.fakes.amplitude >= 0 and math.isfinite(cfg.fakes.amplitude)):
        out.append(Violation("fakes.amplitude", f"{cfg.fakes.amplitude} must be >= 0"))

    _check_assets(out, "targets", cfg.targets, annotated=True)
    _check_assets(out, "distractors", cfg.distractors, annotated=False)
    _check_assets(out, "fake_assets", cfg.fake_assets, annotated=False)
    if s.target_count.max >= 1 and not cfg.targets:
        out.append(Violation("targets", "target_count allows targets but no target assets are listed"))
    if s.distractor_count.max >= 1 and not cfg.distractors:
        out.append(Violation("distractors", "distractor_count allows distractors but none are listed"))
    if s.fake_count.max >= 1 and not cfg.fake_assets and not (cfg.fakes.deform_targets and cfg.targets):
        out.append(Violation("fake_assets", "fake_count allows fakes but no fake source is available"))
    by_id: dict[int, str] = {}
    for i, t in enumerate(cfg.targets):
        if t.category_id > 0:
            label = t.name or t.path
            if by_id.setdefault(t.category_id, label) != label:
                out.append(Violation(f"targets[{i}].category_id",
                                     f"id {t.category_id} already used by {by_id[t.category_id]!r}"))

    b = cfg.background
    if b.enabled and not b.hdris and not b.hdri_dir:
        out.append(Violation("background.hdris", "background enabled but the HDRI pool is empty"))
    p = cfg.plane
    if p.enabled and not p.materials:
        out.append(Violation("plane.materials", "plane enabled but the material pool is empty"))
    if not p.size > 0:
        out.append(Violation("plane.size", f"{p.size} must be > 0 m"))
    for i, m in enumerate(p.materials):
        _check_material(out, f"plane.materials[{i}]", m)

    r = cfg.render
    for attr in ("spp", "max_depth", "tile_size"):
        if getattr(r, attr) < 1:
            out.append(Violation(f"render.{attr}", f"{getattr(r, attr)} must be >= 1"))
    if not r.clamp >= 0:
        out.append(Violation("render.clamp", f"{r.clamp} must be >= 0 (0 = automatic)"))

    st = cfg.settle
    if not st.timestep > 0:
        out.append(Violation("settle.timestep", f"{st.timestep} must be > 0 s"))
    if st.max_steps < 1:
        out.append(Violation("settle.max_steps", f"{st.max_steps} must be >= 1"))
    if not st.rest_threshold > 0:
        out.append(Violation("settle.rest_threshold", f"{st.rest_threshold} must be > 0 m/s"))
    if not (0.0 <= st.restitution < 1.0):
        out.append(Violation("settle.restitution", f"{st.restitution} outside [0, 1)"))
    if not st.friction >= 0:
        out.append(Violation("settle.friction", f"{st.friction} must be >= 0"))
    if not st.gravity >= 0:
        out.append(Violation("settle.gravity", f"{st.gravity} must be >= 0 m/s^2"))

    if cfg.annotate.min_pixels < 1:
        out.append(Violation("annotate.min_pixels", f"{cfg.annotate.min_pixels} must be >= 1"))
    return out


def raise_for_violations(cfg: GenerationConfig) -> None:
    violations = validate_config(cfg)
    if not violations:
        return
    message = "invalid configuration:\n  " + "\n  ".join(str(v) for v in violations)
    if any(v.kind == "frame_interval" for v in violations):
        raise FrameIntervalError(message, violations)
    raise ConfigError(message, violations)


def resolved_category_ids(cfg: GenerationConfig) -> list[int]:
    """Category id per target asset; ``0`` entries are numbered after the explicit ones."""
    used = {t.category_id for t in cfg.targets if t.category_id > 0}
    names: dict[str, int] = {}
    next_id = 1
    out = []
    for t in cfg.targets:
        if t.category_id > 0:
            out.append(t.category_id)
            continue
        label = t.name or t.path
        if label not in names:
            while next_id in used:
                next_id += 1
            names[label] = next_id
            used.add(next_id)
        out.append(names[label])
    return out


__all__ = [
    "PASSES", "ScalarRange", "AxisRanges", "MaterialConfig", "AssetConfig", "AnchorConfig",
    "CameraConfig", "LightsConfig", "SpawnConfig", "FakesConfig", "BackgroundConfig",
    "PlaneConfig", "RenderConfig", "SettleConfig", "AnnotateConfig", "GenerationConfig",
    "Violation", "default_config", "parse_config", "load_config", "serialize_config",
    "config_to_dict", "config_from_dict", "validate_config", "raise_for_violations",
    "resolved_category_ids",
]
