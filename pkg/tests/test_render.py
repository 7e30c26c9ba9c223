import os
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from synthgen.assets.catalog import build_catalog
from synthgen.assets.hdri import constant_hdri
from synthgen.assets.materials import Material
from synthgen.assets.mesh import plain_cube, quad, uv_sphere
from synthgen.errors import FrameIntervalError, SynthGenError
from synthgen.render import (PLANE_INSTANCE_ID, Camera, RenderScene, RenderSettings, build_bvh, render_frame,
                             render_range, render_scene)
from synthgen.sampler import sample_run

from conftest import small_config
from oracles import brute_force_hits

WHITE = Material(base_color=(1.0, 1.0, 1.0), roughness=1.0, metallic=0.0, specular=0.0)


def _translate(x, y, z):
    m = np.eye(4)
    m[:3, 3] = (x, y, z)
    return m


# ---------------------------------------------------------------- BVH


def test_bvh_matches_brute_force_hits():
    rng = np.random.default_rng(1)
    centers = rng.uniform(-1, 1, (10_000, 1, 3))
    tris = centers + rng.normal(0, 0.05, (10_000, 3, 3))
    bvh = build_bvh(tris)
    o = rng.uniform(-1.5, 1.5, (1000, 3))
    d = rng.normal(size=(1000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    ids, ts = bvh.intersect(o, d)
    ref_ids, ref_ts = brute_force_hits(tris, o, d)
    assert np.array_equal(ids, ref_ids)
    hit = ref_ids >= 0
    assert hit.sum() > 100
    assert np.all(np.abs(ts[hit] - ref_ts[hit]) <= 1e-9 * ref_ts[hit])


def test_bvh_single_triangle():
    tri = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]], float)
    bvh = build_bvh(tri)
    assert len(bvh.leaves()) == 1
    rng = np.random.default_rng(0)
    o = np.column_stack([rng.uniform(-0.5, 1.5, (200, 2)), np.full(200, 1.0)])
    d = np.tile([0.0, 0.0, -1.0], (200, 1))
    assert np.array_equal(bvh.intersect(o, d)[0], brute_force_hits(tri, o, d)[0])


def test_bvh_disjoint_clusters():
    rng = np.random.default_rng(2)
    a = rng.uniform(0, 1, (50, 3, 3))
    b = rng.uniform(0, 1, (50, 3, 3)) + [5.0, 0.0, 0.0]
    bvh = build_bvh(np.concatenate([a, b]))
    lo_l, hi_l = bvh.node_min[bvh.left[0]], bvh.node_max[bvh.left[0]]
    lo_r, hi_r = bvh.node_min[bvh.right[0]], bvh.node_max[bvh.right[0]]
    assert np.any((hi_l < lo_r) | (hi_r < lo_l))


def test_bvh_structure():
    rng = np.random.default_rng(3)
    tris = rng.uniform(-1, 1, (500, 3, 3))
    bvh = build_bvh(tris)
    assert np.array_equal(np.sort(bvh.order), np.arange(500))
    for n in range(bvh.n_nodes):
        if bvh.left[n] < 0:
            span = bvh.order[bvh.start[n]:bvh.start[n] + bvh.count[n]]
            assert np.all(tris[span].min(axis=(0, 1)) >= bvh.node_min[n])
            assert np.all(tris[span].max(axis=(0, 1)) <= bvh.node_max[n])
        else:
            for c in (bvh.left[n], bvh.right[n]):
                assert np.all(bvh.node_min[c] >= bvh.node_min[n])
                assert np.all(bvh.node_max[c] <= bvh.node_max[n])


def test_bvh_empty():
    with pytest.raises(SynthGenError):
        build_bvh(np.zeros((0, 3, 3)))


# ---------------------------------------------------------------- analytic scenes


def test_furnace():
    cam = Camera.looking_at((0, -4, 0), (0, 0, 0), 64, 64, fov_deg=30)
    rs = RenderScene(cam)
    rs.add_mesh(uv_sphere(1.0, 96, 192), None, WHITE, 1, 1)
    rs.set_environment(constant_hdri(0.5).radiance)
    fb = render_scene(rs, RenderSettings(spp=1024), seed=1)
    px = fb.rgb[fb.instance == 1]
    assert len(px) > 2000
    assert abs(px.mean() / 0.5 - 1) <= 0.02
    assert np.all(np.abs(px / 0.5 - 1) <= 0.02)


def test_depth_of_unit_sphere():
    cam = Camera.looking_at((0, 0, 0), (0, 0, 5), 64, 64, fov_deg=40)
    rs = RenderScene(cam)
    rs.add_mesh(uv_sphere(1.0, 96, 192), _translate(0, 0, 5), None, 1, 1)
    fb = render_scene(rs, RenderSettings(spp=1), seed=0)
    assert abs(fb.depth[np.isfinite(fb.depth)].min() - 4.0) <= 1e-3


def test_empty_scene_without_environment():
    rs = RenderScene(Camera.looking_at((0, -3, 1), (0, 0, 0), 16, 12))
    fb = render_scene(rs, RenderSettings(spp=4), seed=0)
    assert not fb.rgb.any()
    assert np.all(np.isinf(fb.depth))
    assert not fb.instance.any() and not fb.semantic.any()
    assert not fb.normal.any()


def test_no_illumination_is_black():
    rs = RenderScene(Camera.looking_at((0, -3, 1), (0, 0, 0), 16, 16))
    rs.add_mesh(plain_cube(1.0), None, WHITE, 1, 1)
    fb = render_scene(rs, RenderSettings(spp=8), seed=0)
    assert (fb.instance == 1).any()
    assert np.all(fb.rgb == 0.0)


def test_area_light_only():
    rs = RenderScene(Camera.looking_at((0, -3, 2), (0, 0, 0), 24, 24))
    rs.add_mesh(quad(4.0), None, WHITE, 1, 1)
    rs.add_area_light((0, 0, 2), (0, 0, -1), 0.5, (5.0, 5.0, 5.0))
    fb = render_scene(rs, RenderSettings(spp=8), seed=0)
    assert fb.rgb.mean() > 0
    # lights are invisible to the camera and cast no geometry
    assert set(np.unique(fb.instance)) <= {0, 1}


# ---------------------------------------------------------------- sampled scenes


@pytest.fixture(scope="module")
def sampled():
    cfg = small_config(scene_count=2, physics_enabled=True)
    cfg = replace(cfg, camera=replace(cfg.camera, resolution=(48, 40)))
    cat = build_catalog(cfg)
    return cfg, cat, sample_run(cfg, cat)


def test_pass_coherence(sampled):
    cfg, cat, scenes = sampled
    for s in scenes:
        fb = render_frame(s, RenderSettings(spp=2), cfg.seed, cat, cfg.plane.size)
        cats = {i.instance_id: i.category_id for i in s.instances}
        cats[PLANE_INSTANCE_ID] = 0
        hit = fb.instance > 0
        assert hit.any()
        assert np.all(np.isfinite(fb.depth[hit])) and np.all(np.isinf(fb.depth[~hit]))
        assert np.allclose(np.linalg.norm(fb.normal[hit], axis=1), 1.0, atol=1e-5)
        assert not fb.normal[~hit].any()
        for iid in np.unique(fb.instance[hit]):
            assert np.all(fb.semantic[fb.instance == iid] == cats[int(iid)])
        assert not fb.semantic[~hit].any()
        assert fb.stats["nan_samples"] == 0


def test_passes_independent_of_spp(sampled):
    cfg, cat, scenes = sampled
    a = render_frame(scenes[0], RenderSettings(spp=2), cfg.seed, cat)
    b = render_frame(scenes[0], RenderSettings(spp=4), cfg.seed, cat)
    for name in ("depth", "normal", "instance", "semantic"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name
    assert not np.array_equal(a.rgb, b.rgb)


THREADS_PROBE = """
from dataclasses import replace
import hashlib
import numba
from synthgen.assets.catalog import build_catalog
from synthgen.render import RenderSettings, render_frame
from synthgen.sampler import sample_run
from conftest import small_config

cfg = small_config(scene_count=2, physics_enabled=True)
cfg = replace(cfg, camera=replace(cfg.camera, resolution=(48, 40)))
cat = build_catalog(cfg)
scene = sample_run(cfg, cat)[1]
print(numba.config.NUMBA_NUM_THREADS)
for threads, seed in [(1, 0), (4, 0), (1, 1)]:
    fb = render_frame(scene, RenderSettings(spp=3, tile_size=8), seed, cat, threads=threads)
    print(hashlib.sha256(fb.rgb.tobytes()).hexdigest())
"""


def test_thread_count_does_not_change_output():
    # pytest plugins may import numba before the thread count can be raised, so probe in a fresh process
    env = dict(os.environ, NUMBA_NUM_THREADS="4")
    out = subprocess.run([sys.executable, "-c", THREADS_PROBE], env=env, cwd=Path(__file__).parent,
                         capture_output=True, text=True, check=True, timeout=1200).stdout.split()
    assert out[0] == "4"
    one, four, other_seed = out[1:]
    assert one == four
    assert one != other_seed


def test_render_range(sampled):
    cfg, cat, scenes = sampled
    out = render_range(scenes, 1, 1, RenderSettings(spp=1), cfg.seed, cat)
    assert [f.frame_index for f in out] == [1]
    assert len(render_range(scenes, 0, 1, RenderSettings(spp=1), cfg.seed, cat)) == 2
    for f_s, f_e in [(1, 0), (0, 2), (-1, 0)]:
        with pytest.raises(FrameIntervalError):
            render_range(scenes, f_s, f_e, RenderSettings(spp=1), cfg.seed, cat)


def test_settings_validation():
    with pytest.raises(ValueError):
        RenderSettings(spp=0)
    with pytest.raises(ValueError):
        RenderSettings(clamp=-1.0)
