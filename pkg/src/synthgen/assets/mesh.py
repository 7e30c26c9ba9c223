"""Triangle meshes, collision proxies, merging and fake-model deformation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..errors import AssetError
from .materials import Material

MIN_HALF_EXTENT = 1e-4


@dataclass(eq=False)
class Mesh:
    """Indexed triangle mesh in metres.

    ``category_id`` 0 is reserved for unannotated geometry (distractors,
    fakes, the ground plane).
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray
    uvs: Optional[np.ndarray] = None
    category_id: int = 0
    name: str = ""
    material: Optional[Material] = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def copy(self, **changes) -> "Mesh":
        fields = dict(
            vertices=self.vertices.copy(), faces=self.faces.copy(), normals=self.normals.copy(),
            uvs=None if self.uvs is None else self.uvs.copy(),
        )
        fields.update(changes)
        return replace(self, **fields)


def triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    v = vertices[faces]
    return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


def surface_area(mesh: Mesh) -> float:
    return float(triangle_areas(mesh.vertices, mesh.faces).sum())


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals; isolated vertices get +z."""
    v = vertices[faces]
    fn = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    acc = np.zeros_like(vertices, dtype=np.float64)
    for k in range(3):
        np.add.at(acc, faces[:, k], fn)
    return _normalize_rows(acc)


def _normalize_rows(n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=np.float64)
    length = np.linalg.norm(n, axis=1)
    bad = ~(length > 1e-300)
    out = n / np.where(bad, 1.0, length)[:, None]
    out[bad] = (0.0, 0.0, 1.0)
    return out


def build_mesh(vertices, faces, normals=None, uvs=None, category_id=0, name="", material=None) -> Mesh:
    """Validate raw buffers and return a :class:`Mesh`.

    Drops zero-area triangles, recomputes missing or degenerate normals and
    raises :class:`AssetError` for out-of-range indices or empty geometry.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    label = name or "mesh"
    if len(vertices) == 0 or len(faces) == 0:
        raise AssetError(f"{label}: empty geometry")
    if not np.all(np.isfinite(vertices)):
        raise AssetError(f"{label}: non-finite vertex coordinates")
    if faces.min() < 0 or faces.max() >= len(vertices):
        raise AssetError(f"{label}: face index out of range (vertex count {len(vertices)})")
    areas = triangle_areas(vertices, faces)
    faces = faces[areas > 0.0]
    if len(faces) == 0:
        raise AssetError(f"{label}: all triangles are degenerate")
    computed = vertex_normals(vertices, faces)
    if normals is None:
        normals = computed
    else:
        normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
        if normals.shape != vertices.shape:
            raise AssetError(f"{label}: normal count does not match vertex count")
        length = np.linalg.norm(normals, axis=1)
        ok = np.isfinite(length) & (length > 1e-12)
        normals = np.where(ok[:, None], normals / np.where(ok, length, 1.0)[:, None], computed)
    if uvs is not None:
        uvs = np.asarray(uvs, dtype=np.float64).reshape(-1, 2)
        if len(uvs) != len(vertices):
            raise AssetError(f"{label}: UV count does not match vertex count")
    return Mesh(vertices, faces, normals, uvs, int(category_id), name, material)


def transform_mesh(mesh: Mesh, matrix: np.ndarray) -> Mesh:
    """Apply a 4x4 affine transform to positions and normals."""
    m = np.asarray(matrix, dtype=np.float64)
    verts = mesh.vertices @ m[:3, :3].T + m[:3, 3]
    normal_m = np.linalg.inv(m[:3, :3]).T
    normals = _normalize_rows(mesh.normals @ normal_m.T)
    faces = mesh.faces
    if np.linalg.det(m[:3, :3]) < 0:
        faces = faces[:, ::-1].copy()
    return replace(mesh, vertices=verts, normals=normals, faces=faces)


def scale_mesh(mesh: Mesh, scale: float) -> Mesh:
    if scale == 1.0:
        return mesh
    return replace(mesh, vertices=mesh.vertices * float(scale))


def merge_children(meshes: list[Mesh]) -> Mesh:
    """Concatenate sub-meshes into one; geometry buffers are copied verbatim."""
    if not meshes:
        raise AssetError("merge_children: empty mesh list")
    cats = {m.category_id for m in meshes}
    if len(cats) > 1:
        raise AssetError(f"merge_children: mixed category ids {sorted(cats)}")
    if len(meshes) == 1:
        return meshes[0]
    offsets = np.cumsum([0] + [m.n_vertices for m in meshes[:-1]])
    faces = np.concatenate([m.faces + off for m, off in zip(meshes, offsets)])
    has_uv = [m.uvs is not None for m in meshes]
    uvs = None
    if any(has_uv):
        uvs = np.concatenate([m.uvs if m.uvs is not None else np.zeros((m.n_vertices, 2))
                              for m in meshes])
    first = meshes[0]
    return Mesh(
        vertices=np.concatenate([m.vertices for m in meshes]),
        faces=faces,
        normals=np.concatenate([m.normals for m in meshes]),
        uvs=uvs,
        category_id=first.category_id,
        name=first.name,
        material=next((m.material for m in meshes if m.material is not None), None),
    )


# ---------------------------------------------------------------- proxies


@dataclass(frozen=True, eq=False)
class ProxyBox:
    """Oriented box in the parent's local frame (``rotation`` maps box->local)."""

    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
        return self.center + (signs * self.half_extents) @ self.rotation.T

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        local = (np.asarray(points) - self.center) @ self.rotation
        return np.all(np.abs(local) <= self.half_extents + tol, axis=-1)


def compute_proxy_box(mesh: Mesh, min_half_extent: float = MIN_HALF_EXTENT) -> ProxyBox:
    """Object-aligned bounding box, each half-extent floored at ``min_half_extent``."""
    parts = mesh if isinstance(mesh, (list, tuple)) else [mesh]
    verts = np.concatenate([m.vertices for m in parts])
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    half = np.maximum((hi - lo) / 2.0, min_half_extent)
    return ProxyBox(center=(lo + hi) / 2.0, half_extents=half, rotation=np.eye(3))


# ---------------------------------------------------------------- fake models


def _lattice_hash(ix, iy, iz, seed: int) -> np.ndarray:
    h = (ix.astype(np.uint64) * np.uint64(0x9E3779B185EBCA87)
         ^ iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
         ^ iz.astype(np.uint64) * np.uint64(0x165667B19E3779F9)
         ^ np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xC4CEB9FE1A85EC53)
    h ^= h >> np.uint64(33)
    return (h >> np.uint64(11)).astype(np.float64) * (2.0 / 2.0**53) - 1.0


def value_noise(points: np.ndarray, seed: int, octaves: int = 3) -> np.ndarray:
    """Smooth lattice value noise in [-1, 1] (octave weights 1, 1/2, 1/4, ...)."""
    total = np.zeros(len(points))
    norm = 0.0
    with np.errstate(over="ignore"):
        for o in range(octaves):
            p = points * (2.0 ** o)
            base = np.floor(p)
            f = p - base
            w = f * f * (3.0 - 2.0 * f)
            i = base.astype(np.int64)
            acc = np.zeros(len(points))
            for dx in (0, 1):
                wx = w[:, 0] if dx else 1.0 - w[:, 0]
                for dy in (0, 1):
                    wy = w[:, 1] if dy else 1.0 - w[:, 1]
                    for dz in (0, 1):
                        wz = w[:, 2] if dz else 1.0 - w[:, 2]
                        acc += wx * wy * wz * _lattice_hash(i[:, 0] + dx, i[:, 1] + dy, i[:, 2] + dz,
                                                            seed + 7919 * o)
            amp = 0.5 ** o
            total += amp * acc
            norm += amp
    return total / norm


def _welded_directions(vertices: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Average normals over coincident positions so split seams move together."""
    _, inverse = np.unique(vertices, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    acc = np.zeros((inverse.max() + 1, 3))
    np.add.at(acc, inverse, normals)
    return _normalize_rows(acc[inverse])


def make_fake_model(mesh: Mesh, amplitude: float, seed: int) -> Mesh:
    """Deform ``mesh`` along its normals with smooth noise.

    ``amplitude`` is a fraction of the bounding-sphere radius (AABB centre,
    farthest vertex). Topology and UVs are untouched and the result is never
    annotated (category 0).
    """
    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    lo, hi = mesh.bounds()
    center = (lo + hi) / 2.0
    radius = float(np.linalg.norm(mesh.vertices - center, axis=1).max())
    if amplitude == 0 or radius == 0:
        return mesh.copy(category_id=0, name=f"{mesh.name}_fake")
    freq = 2.0 / radius
    noise = value_noise((mesh.vertices - center) * freq + 0.5, seed)
    dirs = _welded_directions(mesh.vertices, mesh.normals)
    displaced = mesh.vertices + dirs * (amplitude * radius * noise)[:, None]
    return Mesh(
        vertices=displaced,
        faces=mesh.faces.copy(),
        normals=vertex_normals(displaced, mesh.faces),
        uvs=None if mesh.uvs is None else mesh.uvs.copy(),
        category_id=0,
        name=f"{mesh.name}_fake",
        material=mesh.material,
    )


# ---------------------------------------------------------------- primitives


def cube(size: float = 1.0) -> Mesh:
    """Axis-aligned cube centred at the origin with flat (split) faces."""
    h = size / 2.0
    verts, normals, uvs, faces = [], [], [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            n = np.zeros(3)
            n[axis] = sign
            u_ax, v_ax = [a for a in range(3) if a != axis]
            if sign < 0:
                u_ax, v_ax = v_ax, u_ax
            base = len(verts)
            for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
                p = np.zeros(3)
                p[axis] = sign * h
                p[u_ax] = su * h
                p[v_ax] = sv * h
                verts.append(p)
                normals.append(n)
                uvs.append(((su + 1) / 2, (sv + 1) / 2))
            faces += [(base, base + 1, base + 2), (base, base + 2, base + 3)]
    return build_mesh(verts, faces, normals, uvs, name="cube")


def plain_cube(size: float = 1.0) -> Mesh:
    """Eight-vertex cube (shared corners, smooth normals)."""
    h = size / 2.0
    v = np.array([[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)])
    f = [(0, 1, 3), (0, 3, 2), (4, 6, 7), (4, 7, 5), (0, 4, 5), (0, 5, 1),
         (2, 3, 7), (2, 7, 6), (0, 2, 6), (0, 6, 4), (1, 5, 7), (1, 7, 3)]
    return build_mesh(v, f, name="cube")


def uv_sphere(radius: float = 1.0, rings: int = 24, segments: int = 48) -> Mesh:
    """Latitude/longitude sphere with ``(rings - 1) * segments + 2`` vertices."""
    verts = [(0.0, 0.0, radius)]
    uvs = [(0.5, 0.0)]
    for i in range(1, rings):
        theta = np.pi * i / rings
        for j in range(segments):
            phi = 2 * np.pi * j / segments
            verts.append((radius * np.sin(theta) * np.cos(phi), radius * np.sin(theta) * np.sin(phi),
                          radius * np.cos(theta)))
            uvs.append((j / segments, i / rings))
    verts.append((0.0, 0.0, -radius))
    uvs.append((0.5, 1.0))
    faces = []
    for j in range(segments):
        faces.append((0, 1 + j, 1 + (j + 1) % segments))
    for i in range(rings - 2):
        a0 = 1 + i * segments
        b0 = a0 + segments
        for j in range(segments):
            j1 = (j + 1) % segments
            faces.append((a0 + j, b0 + j, b0 + j1))
            faces.append((a0 + j, b0 + j1, a0 + j1))
    last = len(verts) - 1
    a0 = 1 + (rings - 2) * segments
    for j in range(segments):
        faces.append((a0 + j, last, a0 + (j + 1) % segments))
    verts = np.array(verts)
    return build_mesh(verts, faces, verts / radius, uvs, name="sphere")


def cylinder(radius: float = 0.5, height: float = 1.0, segments: int = 32) -> Mesh:
    parts = []
    h = height / 2.0
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    side_v = np.concatenate([np.column_stack([ring, np.full(segments, -h)]),
                             np.column_stack([ring, np.full(segments, h)])])
    side_n = np.concatenate([np.column_stack([np.cos(ang), np.sin(ang), np.zeros(segments)])] * 2)
    side_f = []
    for j in range(segments):
        j1 = (j + 1) % segments
        side_f += [(j, j1, segments + j1), (j, segments + j1, segments + j)]
    parts.append(build_mesh(side_v, side_f, side_n, name="cylinder"))
    for z, sign in ((-h, -1.0), (h, 1.0)):
        cap_v = np.vstack([[0.0, 0.0, z], np.column_stack([ring, np.full(segments, z)])])
        cap_f = [(0, 1 + (j + 1) % segments, 1 + j) if sign < 0 else (0, 1 + j, 1 + (j + 1) % segments)
                 for j in range(segments)]
        parts.append(build_mesh(cap_v, cap_f, np.tile([0.0, 0.0, sign], (segments + 1, 1)), name="cylinder"))
    return merge_children(parts)


def quad(size: float = 1.0, z: float = 0.0) -> Mesh:
    """Square in the XY plane facing +z."""
    h = size / 2.0
    v = [(-h, -h, z), (h, -h, z), (h, h, z), (-h, h, z)]
    uv = [(0, 0), (size, 0), (size, size), (0, size)]
    return build_mesh(v, [(0, 1, 2), (0, 2, 3)], np.tile([0.0, 0.0, 1.0], (4, 1)), uv, name="plane")


BUILTIN_MESHES = {
    "cube": cube,
    "sphere": uv_sphere,
    "cylinder": cylinder,
}
