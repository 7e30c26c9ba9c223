"""OBJ, PLY and binary glTF mesh loaders.

Every loader returns a list of child meshes (OBJ objects/groups, glTF
primitives, a PLY file is a single child). Units are metres; only static
triangle geometry with base-colour materials is accepted.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

import numpy as np

from ..codecs import decode_image_bytes
from ..errors import AssetError
from .materials import Material
from .mesh import BUILTIN_MESHES, Mesh, build_mesh, merge_children, scale_mesh

log = logging.getLogger(__name__)

FORMATS = ("obj", "ply", "glb")
_UNSUPPORTED_OBJ = {"l", "p", "curv", "curv2", "surf", "cstype", "deg", "bmat", "step", "vp"}


def detect_format(path) -> str:
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix in ("obj", "ply", "glb"):
        return suffix
    if suffix == "gltf":
        raise AssetError(f"{path}: text glTF is not supported, convert to .glb")
    raise AssetError(f"{path}: unknown mesh format {suffix!r}")


def load_mesh_parts(path, format: str | None = None, scale: float = 1.0, category_id: int = 0) -> list[Mesh]:
    """Load all child meshes of a file (or ``builtin:<name>``)."""
    spath = str(path)
    if spath.startswith("builtin:"):
        name = spath.split(":", 1)[1]
        if name not in BUILTIN_MESHES:
            raise AssetError(f"unknown builtin mesh {name!r}; available: {sorted(BUILTIN_MESHES)}")
        parts = [BUILTIN_MESHES[name]()]
    else:
        fmt = (format or detect_format(path)).lower()
        if fmt not in FORMATS:
            raise AssetError(f"{path}: unsupported format {fmt!r}")
        p = Path(path)
        if not p.is_file():
            raise AssetError(f"{path}: file not found")
        parts = {"obj": _load_obj, "ply": _load_ply, "glb": _load_glb}[fmt](p)
    out = []
    for m in parts:
        m = scale_mesh(m, scale)
        m.category_id = int(category_id)
        out.append(m)
    return out


def load_mesh(path, format: str | None = None, scale: float = 1.0, category_id: int = 0) -> Mesh:
    """Load a mesh file as a single :class:`Mesh` (children merged)."""
    return merge_children(load_mesh_parts(path, format, scale, category_id))


# ---------------------------------------------------------------- OBJ


def _obj_index(token: str, count: int, line_no: int, path) -> int:
    i = int(token)
    idx = i - 1 if i > 0 else count + i
    if i == 0 or not 0 <= idx < count:
        raise AssetError(f"{path}:{line_no}: index {i} out of range (have {count})")
    return idx


def _parse_mtl(path: Path) -> dict[str, Material]:
    materials: dict[str, dict] = {}
    current = None
    for raw in path.read_text(encoding="utf-8", errors="replace").splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        key = parts[0]
        if key == "newmtl":
            current = materials.setdefault(" ".join(parts[1:]), {})
        elif current is None:
            continue
        elif key == "Kd" and len(parts) >= 4:
            current["base_color"] = tuple(min(max(float(v), 0.0), 1.0) for v in parts[1:4])
        elif key == "Ns":
            # Blinn-Phong exponent -> GGX alpha = sqrt(2 / (Ns + 2)), roughness = sqrt(alpha)
            ns = max(float(parts[1]), 0.0)
            current["roughness"] = float(np.clip(np.sqrt(2.0 / (ns + 2.0)) ** 0.5, 0.0, 1.0))
        elif key == "Pm":
            current["metallic"] = float(np.clip(float(parts[1]), 0.0, 1.0))
        elif key == "Pr":
            current["roughness"] = float(np.clip(float(parts[1]), 0.0, 1.0))
        elif key == "map_Kd":
            tex_path = path.parent / parts[-1]
            current["texture_ref"] = str(tex_path)
    out = {}
    for name, rec in materials.items():
        texture = None
        if "texture_ref" in rec:
            tex_path = Path(rec["texture_ref"])
            if not tex_path.is_file():
                raise AssetError(f"{path}: texture {tex_path} not found")
            texture = decode_image_bytes(tex_path.read_bytes(), str(tex_path))
        out[name] = Material(
            base_color=rec.get("base_color", (0.8, 0.8, 0.8)),
            roughness=rec.get("roughness", 0.5),
            metallic=rec.get("metallic", 0.0),
            texture=texture,
            texture_ref=rec.get("texture_ref"),
        )
    return out


def _load_obj(path: Path) -> list[Mesh]:
    positions, texcoords, normals = [], [], []
    groups: list[dict] = []
    materials: dict[str, Material] = {}
    current = None
    current_material = None

    def start_group(name):
        nonlocal current
        current = {"name": name, "faces": [], "material": current_material}
        groups.append(current)

    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise AssetError(f"{path}: not UTF-8 text ({exc.reason})") from None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        key = parts[0]
        try:
            if key == "v":
                positions.append([float(v) for v in parts[1:4]])
                if len(positions[-1]) != 3:
                    raise ValueError("vertex needs 3 coordinates")
            elif key == "vt":
                uv = [float(v) for v in parts[1:3]]
                texcoords.append(uv + [0.0] * (2 - len(uv)))
            elif key == "vn":
                normals.append([float(v) for v in parts[1:4]])
            elif key == "f":
                if current is None or (current["faces"] and current["material"] is not current_material):
                    start_group(current["name"] if current else path.stem)
                corners = []
                for tok in parts[1:]:
                    fields = tok.split("/")
                    vi = _obj_index(fields[0], len(positions), line_no, path)
                    ti = _obj_index(fields[1], len(texcoords), line_no, path) if len(fields) > 1 and fields[1] else -1
                    ni = _obj_index(fields[2], len(normals), line_no, path) if len(fields) > 2 and fields[2] else -1
                    corners.append((vi, ti, ni))
                if len(corners) < 3:
                    raise ValueError("face needs at least 3 vertices")
                for k in range(1, len(corners) - 1):
                    current["faces"].append((corners[0], corners[k], corners[k + 1]))
            elif key in ("o", "g"):
                start_group(" ".join(parts[1:]) or path.stem)
            elif key == "usemtl":
                name = " ".join(parts[1:])
                current_material = materials.get(name)
                if current is not None and not current["faces"]:
                    current["material"] = current_material
            elif key == "mtllib":
                mtl = path.parent / " ".join(parts[1:])
                if mtl.is_file():
                    materials.update(_parse_mtl(mtl))
                else:
                    log.warning("%s:%d: material library %s not found", path, line_no, mtl)
            elif key in _UNSUPPORTED_OBJ:
                raise AssetError(f"{path}:{line_no}: unsupported OBJ element {key!r}")
            elif key in ("s", "mg", "lod", "usemap", "maplib", "shadow_obj", "trace_obj"):
                continue
            else:
                raise AssetError(f"{path}:{line_no}: unknown OBJ statement {key!r}")
        except ValueError as exc:
            raise AssetError(f"{path}:{line_no}: {exc}") from None

    groups = [g for g in groups if g["faces"]]
    if not positions or not groups:
        raise AssetError(f"{path}: empty geometry")
    pos = np.asarray(positions, dtype=np.float64)
    meshes = []
    for g in groups:
        keys: dict[tuple[int, int, int], int] = {}
        faces = []
        for tri in g["faces"]:
            face = []
            for corner in tri:
                if corner not in keys:
                    keys[corner] = len(keys)
                face.append(keys[corner])
            faces.append(face)
        corners = list(keys)
        vidx = np.array([c[0] for c in corners])
        have_uv = all(c[1] >= 0 for c in corners)
        have_n = all(c[2] >= 0 for c in corners)
        uvs = np.asarray(texcoords)[[c[1] for c in corners]] if have_uv else None
        nrm = np.asarray(normals)[[c[2] for c in corners]] if have_n else None
        meshes.append(build_mesh(pos[vidx], faces, nrm, uvs, name=g["name"], material=g["material"]))
    return meshes


# ---------------------------------------------------------------- PLY


def _load_ply(path: Path) -> list[Mesh]:
    from plyfile import PlyData, PlyParseError

    try:
        ply = PlyData.read(str(path))
    except (PlyParseError, ValueError, struct.error, EOFError) as exc:
        raise AssetError(f"{path}: PLY parse failure ({exc})") from None
    names = [e.name for e in ply.elements]
    if "vertex" not in names or "face" not in names:
        raise AssetError(f"{path}: PLY needs 'vertex' and 'face' elements")
    vert = ply["vertex"].data
    props = set(vert.dtype.names)
    pos = np.column_stack([vert["x"], vert["y"], vert["z"]]).astype(np.float64)
    nrm = None
    if {"nx", "ny", "nz"} <= props:
        nrm = np.column_stack([vert["nx"], vert["ny"], vert["nz"]])
    uvs = None
    for u, v in (("u", "v"), ("s", "t"), ("texture_u", "texture_v")):
        if {u, v} <= props:
            uvs = np.column_stack([vert[u], vert[v]])
            break
    ignored = sorted(props - {"x", "y", "z", "nx", "ny", "nz", "u", "v", "s", "t", "texture_u", "texture_v"})
    if ignored:
        log.warning("%s: ignoring PLY vertex properties %s", path, ignored)
    extra = sorted(set(names) - {"vertex", "face"})
    if extra:
        log.warning("%s: ignoring PLY elements %s", path, extra)
    face_data = ply["face"].data
    key = "vertex_indices" if "vertex_indices" in face_data.dtype.names else "vertex_index"
    if key not in face_data.dtype.names:
        raise AssetError(f"{path}: face element has no vertex index list")
    tris = []
    for poly in face_data[key]:
        poly = [int(i) for i in poly]
        if len(poly) < 3:
            raise AssetError(f"{path}: face with fewer than 3 vertices")
        for k in range(1, len(poly) - 1):
            tris.append((poly[0], poly[k], poly[k + 1]))
    return [build_mesh(pos, tris, nrm, uvs, name=path.stem)]


# ---------------------------------------------------------------- glTF binary

_COMPONENT = {5120: np.int8, 5121: np.uint8, 5122: np.int16, 5123: np.uint16, 5125: np.uint32, 5126: np.float32}
_WIDTH = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4, "MAT4": 16}


def _read_glb_chunks(path: Path) -> tuple[dict, bytes]:
    data = path.read_bytes()
    if len(data) < 20 or data[:4] != b"glTF":
        raise AssetError(f"{path}: not a binary glTF file")
    version, length = struct.unpack_from("<II", data, 4)
    if version != 2:
        raise AssetError(f"{path}: glTF version {version} not supported")
    if length > len(data):
        raise AssetError(f"{path}: truncated GLB")
    pos = 12
    doc, blob = None, b""
    while pos + 8 <= length:
        clen, ctype = struct.unpack_from("<II", data, pos)
        chunk = data[pos + 8:pos + 8 + clen]
        if ctype == 0x4E4F534A:
            try:
                doc = json.loads(chunk.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise AssetError(f"{path}: bad GLB JSON chunk ({exc})") from None
        elif ctype == 0x004E4942:
            blob = chunk
        pos += 8 + clen + (-clen % 4)
    if doc is None:
        raise AssetError(f"{path}: GLB has no JSON chunk")
    return doc, blob


def _accessor(doc, blob, index, path) -> np.ndarray:
    acc = doc["accessors"][index]
    if "sparse" in acc:
        raise AssetError(f"{path}: sparse accessors are not supported")
    width = _WIDTH[acc["type"]]
    dtype = np.dtype(_COMPONENT[acc["componentType"]]).newbyteorder("<")
    count = acc["count"]
    if "bufferView" not in acc:
        return np.zeros((count, width), dtype=dtype)
    view = doc["bufferViews"][acc["bufferView"]]
    if view.get("buffer", 0) != 0 or doc["buffers"][view.get("buffer", 0)].get("uri"):
        raise AssetError(f"{path}: external buffers are not supported in GLB input")
    start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    item = dtype.itemsize * width
    stride = view.get("byteStride", item)
    end = start + stride * (count - 1) + item
    if end > len(blob):
        raise AssetError(f"{path}: accessor {index} reads past the binary chunk")
    raw = np.frombuffer(blob, dtype=np.uint8, count=end - start, offset=start)
    if stride == item:
        out = raw[: count * item].view(dtype).reshape(count, width)
    else:
        rows = np.lib.stride_tricks.as_strided(raw, shape=(count, item), strides=(stride, 1))
        out = np.ascontiguousarray(rows).view(dtype).reshape(count, width)
    if acc.get("normalized") and dtype.kind in "iu":
        out = out.astype(np.float64) / np.iinfo(dtype).max
    return np.array(out)


def _node_matrix(node) -> np.ndarray:
    if "matrix" in node:
        return np.asarray(node["matrix"], dtype=np.float64).reshape(4, 4).T
    from scipy.spatial.transform import Rotation

    m = np.eye(4)
    t = node.get("translation", [0, 0, 0])
    r = node.get("rotation", [0, 0, 0, 1])
    s = node.get("scale", [1, 1, 1])
    m[:3, :3] = Rotation.from_quat(r).as_matrix() @ np.diag(s)
    m[:3, 3] = t
    return m


def _glb_material(doc, blob, index, path) -> Material | None:
    if index is None:
        return None
    mat = doc["materials"][index]
    pbr = mat.get("pbrMetallicRoughness", {})
    factor = pbr.get("baseColorFactor", [1, 1, 1, 1])
    texture = None
    ref = None
    if "baseColorTexture" in pbr:
        tex = doc["textures"][pbr["baseColorTexture"]["index"]]
        img = doc["images"][tex["source"]]
        if "bufferView" not in img:
            raise AssetError(f"{path}: only embedded textures are supported")
        view = doc["bufferViews"][img["bufferView"]]
        start = view.get("byteOffset", 0)
        texture = decode_image_bytes(blob[start:start + view["byteLength"]], f"{path}:image{tex['source']}")
        ref = f"{path.name}#image{tex['source']}"
    return Material(
        base_color=tuple(float(np.clip(c, 0, 1)) for c in factor[:3]),
        roughness=float(np.clip(pbr.get("roughnessFactor", 1.0), 0, 1)),
        metallic=float(np.clip(pbr.get("metallicFactor", 1.0), 0, 1)),
        texture=texture,
        texture_ref=ref,
    )


def _load_glb(path: Path) -> list[Mesh]:
    doc, blob = _read_glb_chunks(path)
    for key in ("skins", "animations"):
        if doc.get(key):
            raise AssetError(f"{path}: glTF {key} are not supported (static meshes only)")
    required = doc.get("extensionsRequired", [])
    if required:
        raise AssetError(f"{path}: required glTF extensions not supported: {required}")
    nodes = doc.get("nodes", [])
    scene_index = doc.get("scene", 0)
    scenes = doc.get("scenes", [])
    roots = scenes[scene_index]["nodes"] if scenes else [i for i in range(len(nodes))]
    meshes: list[Mesh] = []

    def visit(i, parent):
        node = nodes[i]
        if "skin" in node or "weights" in node:
            raise AssetError(f"{path}: node {i} uses skinning/morph weights")
        world = parent @ _node_matrix(node)
        if "mesh" in node:
            gmesh = doc["meshes"][node["mesh"]]
            for k, prim in enumerate(gmesh["primitives"]):
                if prim.get("mode", 4) != 4:
                    raise AssetError(f"{path}: primitive mode {prim.get('mode')} (only triangles supported)")
                if prim.get("targets"):
                    raise AssetError(f"{path}: morph targets are not supported")
                attrs = prim["attributes"]
                if "POSITION" not in attrs:
                    raise AssetError(f"{path}: primitive without POSITION")
                pos = _accessor(doc, blob, attrs["POSITION"], path).astype(np.float64)
                if "indices" in prim:
                    idx = _accessor(doc, blob, prim["indices"], path).reshape(-1).astype(np.int64)
                else:
                    idx = np.arange(len(pos))
                if len(idx) % 3:
                    raise AssetError(f"{path}: index count not a multiple of 3")
                nrm = _accessor(doc, blob, attrs["NORMAL"], path) if "NORMAL" in attrs else None
                uv = _accessor(doc, blob, attrs["TEXCOORD_0"], path) if "TEXCOORD_0" in attrs else None
                pos = pos @ world[:3, :3].T + world[:3, 3]
                if nrm is not None:
                    nrm = nrm.astype(np.float64) @ np.linalg.inv(world[:3, :3])
                faces = idx.reshape(-1, 3)
                if np.linalg.det(world[:3, :3]) < 0:
                    faces = faces[:, ::-1]
                name = gmesh.get("name", f"mesh{node['mesh']}") + (f".{k}" if len(gmesh["primitives"]) > 1 else "")
                meshes.append(build_mesh(pos, faces, nrm, uv, name=name,
                                         material=_glb_material(doc, blob, prim.get("material"), path)))
        for child in node.get("children", []):
            visit(child, world)

    for r in roots:
        visit(r, np.eye(4))
    if not meshes:
        raise AssetError(f"{path}: GLB contains no triangle meshes")
    return meshes


def write_glb(path, meshes: list[Mesh]) -> None:
    """Write meshes as a minimal GLB (positions, normals, optional UVs, uint32 indices)."""
    blob = bytearray()
    views, accessors, gl_meshes, nodes = [], [], [], []

    def add(arr, type_, ctype, target):
        nonlocal blob
        arr = np.ascontiguousarray(arr)
        while len(blob) % 4:
            blob += b"\0"
        views.append({"buffer": 0, "byteOffset": len(blob), "byteLength": arr.nbytes, "target": target})
        blob += arr.tobytes()
        acc = {"bufferView": len(views) - 1, "componentType": ctype, "count": len(arr), "type": type_}
        if type_ == "VEC3" and ctype == 5126:
            acc["min"] = arr.min(axis=0).tolist()
            acc["max"] = arr.max(axis=0).tolist()
        accessors.append(acc)
        return len(accessors) - 1

    for i, m in enumerate(meshes):
        attrs = {"POSITION": add(m.vertices.astype("<f4"), "VEC3", 5126, 34962),
                 "NORMAL": add(m.normals.astype("<f4"), "VEC3", 5126, 34962)}
        if m.uvs is not None:
            attrs["TEXCOORD_0"] = add(m.uvs.astype("<f4"), "VEC2", 5126, 34962)
        ind = add(m.faces.reshape(-1).astype("<u4"), "SCALAR", 5125, 34963)
        gl_meshes.append({"name": m.name or f"mesh{i}", "primitives": [{"attributes": attrs, "indices": ind}]})
        nodes.append({"mesh": i})
    while len(blob) % 4:
        blob += b"\0"
    doc = {"asset": {"version": "2.0"}, "scene": 0, "scenes": [{"nodes": list(range(len(nodes)))}],
           "nodes": nodes, "meshes": gl_meshes, "accessors": accessors, "bufferViews": views,
           "buffers": [{"byteLength": len(blob)}]}
    js = json.dumps(doc, separators=(",", ":")).encode()
    js += b" " * (-len(js) % 4)
    total = 12 + 8 + len(js) + 8 + len(blob)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", b"glTF", 2, total))
        fh.write(struct.pack("<II", len(js), 0x4E4F534A) + js)
        fh.write(struct.pack("<II", len(blob), 0x004E4942) + bytes(blob))


def load_texture(path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise AssetError(f"{path}: texture not found")
    return decode_image_bytes(p.read_bytes(), str(p))

