"""Tile-parallel Monte Carlo renderer with geometric passes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from ..errors import FrameIntervalError
from ..streams import stream_key
from . import kernels
from .bvh import Bvh, build_bvh
from .scene import PLANE_INSTANCE_ID, Camera, Environment, RenderScene, build_render_scene, light_radiance

log = logging.getLogger(__name__)

CLAMP_FACTOR = 10.0


@dataclass(frozen=True)
class RenderSettings:
    spp: int = 16
    max_depth: int = 4
    tile_size: int = 16
    clamp: float = 0.0  # 0 selects CLAMP_FACTOR x the expected maximum radiance
    depth_of_field: bool = False

    def __post_init__(self):
        for name in ("spp", "max_depth", "tile_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.clamp < 0:
            raise ValueError("clamp must be >= 0")

    @classmethod
    def from_config(cls, cfg, spp: Optional[int] = None) -> "RenderSettings":
        r = cfg.render
        return cls(spp=spp if spp is not None else r.spp, max_depth=r.max_depth, tile_size=r.tile_size,
                   clamp=r.clamp, depth_of_field=r.depth_of_field)


@dataclass
class FrameBuffers:
    frame_index: int
    rgb: np.ndarray       # (H, W, 3) float32 linear radiance
    depth: np.ndarray     # (H, W) float32 camera-space z, +inf on misses
    normal: np.ndarray    # (H, W, 3) float32 world-space, zero on misses
    instance: np.ndarray  # (H, W) int32, 0 = background
    semantic: np.ndarray  # (H, W) int32, 0 = background
    stats: dict = field(default_factory=dict)

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]


def frame_seed(seed: int, frame_index: int) -> int:
    return int(stream_key(seed, frame_index, "render")[0])


def _set_threads(threads: Optional[int]) -> None:
    if threads:
        try:
            numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
        except ValueError:
            # the thread limit was bound before a config reload; output does not depend on it
            log.debug("keeping %d render threads", numba.get_num_threads())


def render_scene(rs: RenderScene, settings: RenderSettings, seed: int, frame_index: int = 0,
                 threads: Optional[int] = None) -> FrameBuffers:
    """Render a prepared :class:`RenderScene`."""
    _set_threads(threads)
    cam = rs.camera
    w, h = cam.width, cam.height
    bvh = rs.bvh()
    tri_n, tri_uv, tri_mat, tri_inst, tri_cat = rs.geometry_arrays()
    nodes = (bvh.node_min, bvh.node_max, bvh.left, bvh.right, bvh.start, bvh.count, bvh.order, bvh.triangles)
    depth = np.empty((h, w))
    normal = np.empty((h, w, 3))
    inst = np.empty((h, w), np.int64)
    sem = np.empty((h, w), np.int64)
    kernels.render_passes(*nodes, tri_n, tri_uv, tri_mat, tri_inst, tri_cat, cam.position, cam.rotation,
                          cam.fx, cam.fy, cam.cx, cam.cy, w, h, depth, normal, inst, sem)
    env = rs.environment
    lights = rs.light_arrays()
    clamp = settings.clamp if settings.clamp > 0 else CLAMP_FACTOR * rs.max_expected_radiance()
    rgb = np.zeros((h, w, 3))
    tiles = ((w + settings.tile_size - 1) // settings.tile_size) * ((h + settings.tile_size - 1) // settings.tile_size)
    nan_count = np.zeros(tiles, np.int64)
    if env.enabled or lights[0].shape[0] > 0:
        kernels.render_rgb(np.uint64(seed), settings.spp, settings.max_depth, float(clamp), settings.tile_size,
                           *nodes, tri_n, tri_uv, tri_mat, *rs.material_arrays(), *lights,
                           env.radiance, env.enabled, env.uniform, env.marg_cdf, env.cond_cdf, env.marg_pdf,
                           env.cond_pdf, cam.position, cam.rotation, cam.fx, cam.fy, cam.cx, cam.cy, w, h,
                           cam.lens_radius if settings.depth_of_field else 0.0, cam.focus_distance, rgb,
                           nan_count)
    stats = {"spp": settings.spp, "max_depth": settings.max_depth, "clamp": float(clamp),
             "nan_samples": int(nan_count.sum()), "triangles": rs.n_triangles, "seed": int(seed)}
    return FrameBuffers(frame_index=frame_index, rgb=rgb.astype(np.float32), depth=depth.astype(np.float32),
                        normal=normal.astype(np.float32), instance=inst.astype(np.int32),
                        semantic=sem.astype(np.int32), stats=stats)


def render_frame(scene, settings: RenderSettings, seed: int, catalog=None, plane_size: float = 20.0,
                 threads: Optional[int] = None) -> FrameBuffers:
    """Render a :class:`SceneSpec` (with its ``catalog``) or a prepared :class:`RenderScene`.

    ``seed`` is the run seed; each frame derives its own pixel-sampling key.
    """
    if isinstance(scene, RenderScene):
        return render_scene(scene, settings, frame_seed(seed, 0), 0, threads)
    if catalog is None:
        raise ValueError("render_frame: a SceneSpec needs its asset catalog")
    rs = build_render_scene(scene, catalog, plane_size, settings.depth_of_field)
    return render_scene(rs, settings, frame_seed(seed, scene.frame_index), scene.frame_index, threads)


def check_interval(f_s: int, f_e: int, n: int) -> None:
    if not 0 <= f_s <= f_e <= n - 1:
        raise FrameIntervalError(f"frame interval [{f_s}, {f_e}] violates 0 <= start <= end <= {n - 1}")


def render_range(scenes, f_s: int, f_e: int, settings: RenderSettings, seed: int, catalog,
                 plane_size: float = 20.0, threads: Optional[int] = None) -> list[FrameBuffers]:
    """Render frames ``f_s..f_e`` (inclusive) of ``scenes`` in frame order."""
    check_interval(f_s, f_e, len(scenes))
    return [render_frame(scenes[k], settings, seed, catalog, plane_size, threads) for k in range(f_s, f_e + 1)]


__all__ = ["RenderSettings", "FrameBuffers", "RenderScene", "Camera", "Environment", "Bvh", "build_bvh",
           "render_frame", "render_scene", "render_range", "build_render_scene", "frame_seed",
           "check_interval", "light_radiance", "PLANE_INSTANCE_ID"]
