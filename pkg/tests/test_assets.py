import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthgen.errors import AssetError
from synthgen.assets.hdri import HdriMap, load_hdri
from synthgen.assets.loaders import load_mesh, load_mesh_parts, write_glb
from synthgen.assets.materials import Material, sample_random_pbr_material
from synthgen.assets.mesh import (build_mesh, compute_proxy_box, cube, make_fake_model, merge_children, plain_cube,
                                  surface_area, transform_mesh, uv_sphere)
from synthgen.codecs import write_hdr, write_pfm

CUBE_OBJ = """\
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


@pytest.fixture
def cube_obj(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(CUBE_OBJ)
    return p


def _translate(x):
    m = np.eye(4)
    m[0, 3] = x
    return m


# ---------------------------------------------------------------- loading


def test_unit_cube_obj_counts(cube_obj):
    m = load_mesh(cube_obj)
    assert m.n_vertices == 8
    assert m.n_faces == 12
    assert np.allclose(np.linalg.norm(m.normals, axis=1), 1.0)


def test_scale_two_gives_unit_half_extents(cube_obj):
    m = load_mesh(cube_obj, scale=2.0)
    lo, hi = m.bounds()
    assert np.allclose((hi - lo) / 2, 1.0)


def test_face_index_out_of_range(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n")
    with pytest.raises(AssetError):
        load_mesh(p)


def test_empty_and_unsupported_obj(tmp_path):
    p = tmp_path / "empty.obj"
    p.write_text("# nothing\n")
    with pytest.raises(AssetError, match="empty"):
        load_mesh(p)
    p.write_text("v 0 0 0\nv 1 0 0\nl 1 2\n")
    with pytest.raises(AssetError, match="unsupported"):
        load_mesh(p)


def test_missing_file_and_format(tmp_path):
    with pytest.raises(AssetError):
        load_mesh(tmp_path / "nope.obj")
    with pytest.raises(AssetError):
        load_mesh(tmp_path / "x.stl")


def test_degenerate_triangles_dropped():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], float)
    m = build_mesh(v, [[0, 1, 2], [0, 1, 3]])
    assert m.n_faces == 1


def test_obj_groups_are_children(tmp_path, cube_obj):
    text = CUBE_OBJ.replace("f 1 3 2", "o a\nf 1 3 2").replace("f 3 4 8", "o b\nf 3 4 8")
    p = tmp_path / "two.obj"
    p.write_text(text)
    parts = load_mesh_parts(p)
    assert len(parts) == 2
    assert sum(c.n_faces for c in parts) == 12


def test_glb_round_trip(tmp_path):
    src = [cube(1.0), transform_mesh(uv_sphere(0.3, 8, 16), _translate(2.0))]
    p = tmp_path / "m.glb"
    write_glb(p, src)
    parts = load_mesh_parts(p)
    assert len(parts) == 2
    for a, b in zip(src, parts):
        assert b.n_faces == a.n_faces
        assert np.allclose(a.vertices, b.vertices, atol=1e-6)


def test_ply_round_trip(tmp_path):
    from plyfile import PlyData, PlyElement

    c = plain_cube(1.0)
    vert = np.array([tuple(v) for v in c.vertices], dtype=[("x", "f4"), ("y", "f4"), ("z", "f4")])
    face = np.array([(list(f),) for f in c.faces], dtype=[("vertex_indices", "i4", (3,))])
    p = tmp_path / "c.ply"
    PlyData([PlyElement.describe(vert, "vertex"), PlyElement.describe(face, "face")]).write(str(p))
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces) == (8, 12)


def test_builtin_mesh():
    assert load_mesh("builtin:cube").n_faces == 12
    with pytest.raises(AssetError):
        load_mesh("builtin:teapot")


# ---------------------------------------------------------------- merge


def test_merge_singleton_identity():
    c = cube(1.0)
    m = merge_children([c])
    assert np.array_equal(m.vertices, c.vertices)
    assert np.array_equal(m.faces, c.faces)


def test_merge_two_cubes():
    a = plain_cube(1.0)
    b = transform_mesh(a, _translate(2.0))
    m = merge_children([a, b])
    assert (m.n_vertices, m.n_faces) == (16, 24)
    lo, hi = m.bounds()
    assert np.allclose(lo, [-0.5, -0.5, -0.5])
    assert np.allclose(hi, [2.5, 0.5, 0.5])
    assert np.array_equal(m.vertices[8:], b.vertices)


def test_merge_mixed_categories():
    a = plain_cube(1.0)
    b = a.copy(category_id=2)
    a = a.copy(category_id=1)
    with pytest.raises(AssetError):
        merge_children([a, b])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(0.1, 2)), min_size=1, max_size=4))
def test_merge_preserves_surface_area(parts):
    meshes = []
    for x, s in parts:
        m = plain_cube(s)
        meshes.append(transform_mesh(m, _translate(x)))
    total = sum(surface_area(m) for m in meshes)
    assert abs(surface_area(merge_children(meshes)) - total) <= 1e-9 * total


# ---------------------------------------------------------------- proxies


def test_proxy_unit_cube():
    assert np.allclose(compute_proxy_box(cube(1.0)).half_extents, 0.5)


def test_proxy_sphere_within_two_percent():
    s = uv_sphere(0.5, 24, 44)
    assert 900 <= s.n_vertices <= 1100
    half = compute_proxy_box(s).half_extents
    assert np.all(np.abs(half - 0.5) <= 0.02 * 0.5)


def test_proxy_flat_triangle_inflated():
    m = build_mesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), [[0, 1, 2]])
    half = compute_proxy_box(m).half_extents
    assert half[2] == pytest.approx(1e-4)
    assert np.all(half > 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_proxy_encloses_vertices(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(20, 3)) * rng.uniform(0.1, 3, size=3)
    faces = rng.integers(0, 20, size=(15, 3))
    faces = faces[(faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])]
    if len(faces) == 0:
        return
    m = build_mesh(v, faces)
    p = compute_proxy_box(m)
    assert np.all(p.contains(m.vertices))
    lo, hi = m.bounds()
    assert np.prod(2 * p.half_extents) <= np.prod(np.maximum(hi - lo, 2e-4)) * (1 + 1e-12)


# ---------------------------------------------------------------- fakes


def test_fake_zero_amplitude_identical():
    s = uv_sphere(1.0, 16, 32).copy(category_id=3)
    f = make_fake_model(s, 0.0, seed=1)
    assert np.array_equal(f.vertices, s.vertices)
    assert f.category_id == 0


def test_fake_amplitude_bounds_and_topology():
    s = uv_sphere(1.0, 24, 48).copy(category_id=1)
    f = make_fake_model(s, 0.1, seed=7)
    r = np.linalg.norm(f.vertices, axis=1)
    assert r.min() >= 0.9 - 1e-9 and r.max() <= 1.1 + 1e-9
    assert np.array_equal(f.faces, s.faces)
    assert np.array_equal(f.uvs, s.uvs)
    assert not np.array_equal(f.vertices, s.vertices)
    assert f.category_id == 0


def test_fake_deterministic():
    s = uv_sphere(1.0, 12, 24)
    a, b = make_fake_model(s, 0.1, 42), make_fake_model(s, 0.1, 42)
    assert np.array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, make_fake_model(s, 0.1, 43).vertices)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.001, 0.3), st.integers(0, 10**6))
def test_fake_changes_vertices_not_buffers(amp, seed):
    c = cube(1.0)
    f = make_fake_model(c, amp, seed)
    assert np.array_equal(f.faces, c.faces)
    assert np.array_equal(f.uvs, c.uvs)
    assert not np.array_equal(f.vertices, c.vertices)
    radius = np.linalg.norm(c.vertices, axis=1).max()
    disp = np.linalg.norm(f.vertices - c.vertices, axis=1)
    assert disp.max() <= amp * radius * (1 + 1e-9)


# ---------------------------------------------------------------- materials


def test_pbr_reproducible():
    a = sample_random_pbr_material(np.random.default_rng(5))
    b = sample_random_pbr_material(np.random.default_rng(5))
    assert a == b


def test_pbr_ranges_and_mean():
    rng = np.random.default_rng(11)
    mats = [sample_random_pbr_material(rng) for _ in range(10_000)]
    rough = np.array([m.roughness for m in mats])
    metal = np.array([m.metallic for m in mats])
    base = np.array([m.base_color for m in mats])
    assert 0.0 <= rough.min() and rough.max() <= 1.0
    assert 0.0 <= metal.min() and metal.max() <= 1.0
    assert np.all(np.abs(base.mean(axis=0) - 0.5) <= 0.02)


def test_material_rejects_out_of_range():
    with pytest.raises(ValueError):
        Material(roughness=1.5)
    with pytest.raises(ValueError):
        Material(base_color=(0.1, -0.1, 0.2))


# ---------------------------------------------------------------- HDRI


def test_hdri_constant_two_by_one(tmp_path):
    p = tmp_path / "c.pfm"
    write_pfm(p, np.ones((1, 2, 3), np.float32))
    h = load_hdri(p)
    assert (h.width, h.height) == (2, 1)
    assert h.mean_radiance() == pytest.approx(1.0)


def test_hdri_nan_rejected(tmp_path):
    d = np.ones((1, 2, 3), np.float32)
    d[0, 1, 0] = np.nan
    p = tmp_path / "n.pfm"
    write_pfm(p, d)
    with pytest.raises(AssetError):
        load_hdri(p)


def test_hdri_single_bright_texel(tmp_path):
    d = np.zeros((2, 4, 3), np.float32)
    d[1, 2] = 8.0
    p = tmp_path / "t.pfm"
    write_pfm(p, d)
    h = load_hdri(p)
    assert h.radiance[..., 0].mean() == pytest.approx((7 * 0 + 8) / 8)


def test_hdri_invariants():
    with pytest.raises(AssetError):
        HdriMap(-np.ones((1, 2, 3), np.float32))
    with pytest.raises(AssetError):
        HdriMap(np.ones((2, 2, 3), np.float32))


def test_hdr_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    d = rng.uniform(0.01, 10, size=(8, 16, 3)).astype(np.float32)
    p = tmp_path / "e.hdr"
    write_hdr(p, d)
    h = load_hdri(p)
    assert h.radiance.shape == d.shape
    # shared exponent: error bounded by the brightest channel's mantissa step
    assert np.all(np.abs(h.radiance - d) <= d.max(axis=2, keepdims=True) / 128)


def test_missing_hdri(tmp_path, caplog):
    caplog.set_level(logging.WARNING)
    with pytest.raises(AssetError):
        load_hdri(tmp_path / "none.hdr")
