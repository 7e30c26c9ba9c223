"""Meshes, materials, environment maps and the asset catalog."""

from .catalog import Asset, AssetCatalog, build_catalog
from .hdri import HdriMap, builtin_hdri, constant_hdri, load_hdri
from .loaders import load_mesh, load_mesh_parts, write_glb
from .materials import Material, sample_random_pbr_material
from .mesh import (
    Mesh,
    ProxyBox,
    build_mesh,
    compute_proxy_box,
    cube,
    make_fake_model,
    merge_children,
    plain_cube,
    quad,
    surface_area,
    transform_mesh,
    uv_sphere,
)

__all__ = [
    "Asset", "AssetCatalog", "build_catalog", "HdriMap", "builtin_hdri", "constant_hdri", "load_hdri",
    "load_mesh", "load_mesh_parts", "write_glb", "Material", "sample_random_pbr_material", "Mesh",
    "ProxyBox", "build_mesh", "compute_proxy_box", "cube", "make_fake_model", "merge_children",
    "plain_cube", "quad", "surface_area", "transform_mesh", "uv_sphere",
]
