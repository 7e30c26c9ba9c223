"""Rotations, spherical directions, camera frames and oriented boxes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

WORLD_UP = np.array([0.0, 0.0, 1.0])


def euler_to_matrix(euler_deg) -> np.ndarray:
    """Extrinsic x-y-z Euler angles in degrees to a rotation matrix."""
    return Rotation.from_euler("xyz", np.asarray(euler_deg, float), degrees=True).as_matrix()


def matrix_to_euler(R) -> np.ndarray:
    # at gimbal lock scipy zeroes the third angle; the matrix is still reproduced
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return Rotation.from_matrix(np.asarray(R, float)).as_euler("xyz", degrees=True)


def matrix_to_quat(R) -> np.ndarray:
    """Rotation matrix to a ``(w, x, y, z)`` quaternion with ``w >= 0``."""
    x, y, z, w = Rotation.from_matrix(np.asarray(R, float)).as_quat()
    q = np.array([w, x, y, z])
    return -q if w < 0 else q


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return Rotation.from_quat([x, y, z, w]).as_matrix()


def yaw_matrix(yaw_deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(yaw_deg)), np.sin(np.radians(yaw_deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def spherical_direction(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    """Unit vector at ``azimuth`` from +x towards +y and ``elevation`` above the xy-plane."""
    az, el = np.radians(azimuth_deg), np.radians(elevation_deg)
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def direction_angles(v) -> tuple[float, float]:
    """Inverse of :func:`spherical_direction` (degrees)."""
    v = np.asarray(v, float)
    r = np.linalg.norm(v)
    el = float(np.degrees(np.arcsin(np.clip(v[2] / r, -1.0, 1.0))))
    az = float(np.degrees(np.arctan2(v[1], v[0])))
    return az, el


def pose_matrix(position, R) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = position
    return T


def look_at_rotation(position, target, up_hint=WORLD_UP) -> np.ndarray:
    """Camera-to-world rotation; camera axes are +x right, +y down, +z forward."""
    fwd = np.asarray(target, float) - np.asarray(position, float)
    fwd /= np.linalg.norm(fwd)
    up = np.asarray(up_hint, float)
    if abs(fwd @ up) > 0.999:
        up = np.array([0.0, 1.0, 0.0]) if abs(fwd[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd], axis=1)


@dataclass
class Obb:
    """Oriented box in world space."""

    center: np.ndarray
    rotation: np.ndarray
    half: np.ndarray

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
        return self.center + (signs * self.half) @ self.rotation.T

    def lowest_z(self) -> float:
        return float(self.center[2] - np.abs(self.rotation[2]) @ self.half)


def world_obb(proxy, position, R) -> Obb:
    """Place a local-frame proxy box under the pose ``(position, R)``."""
    return Obb(center=np.asarray(position, float) + R @ proxy.center,
               rotation=R @ proxy.rotation, half=np.asarray(proxy.half_extents, float))


def obb_penetration(a: Obb, b: Obb) -> float:
    """Penetration depth along the best separating axis (<= 0 means disjoint)."""
    from .physics._kernels import sat_depth
    return float(sat_depth(a.center, a.rotation, a.half, b.center, b.rotation, b.half))
