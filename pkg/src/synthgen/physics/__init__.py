"""Collision-free placement and gravity settling of proxy boxes.

Targets and fakes are active rigid bodies; distractors are passive (static,
infinite mass). The ground is the passive plane ``z = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from typing import Callable, Optional

import numpy as np

from ..geometry import Obb, matrix_to_euler, matrix_to_quat, obb_penetration, quat_to_matrix, world_obb
from . import _kernels

log = logging.getLogger(__name__)

ACTIVE_ROLES = ("target", "fake")
PENETRATION_TOLERANCE = 1e-4
PLANE_ID = 0


@dataclass(frozen=True)
class SettleParams:
    gravity: float = 9.81
    timestep: float = 1.0 / 240.0
    max_steps: int = 2400
    rest_threshold: float = 1e-3
    restitution: float = 0.0
    friction: float = 0.5
    iterations: int = 20
    slop: float = 5e-4
    baumgarte: float = 0.2
    margin: float = 0.02
    rest_steps: int = 10
    tolerance: float = PENETRATION_TOLERANCE
    density: float = 500.0
    plane: bool = True

    def __post_init__(self):
        if not self.timestep > 0:
            raise ValueError("timestep must be > 0")
        if not self.rest_threshold > 0 or not self.tolerance > 0:
            raise ValueError("thresholds must be > 0")
        if not 0.0 <= self.restitution < 1.0:
            raise ValueError("restitution must lie in [0, 1)")
        if self.friction < 0:
            raise ValueError("friction must be >= 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def settle_params_from_config(cfg) -> SettleParams:
    s = cfg.settle
    return SettleParams(gravity=s.gravity, timestep=s.timestep, max_steps=s.max_steps,
                        rest_threshold=s.rest_threshold, restitution=s.restitution, friction=s.friction)


# ---------------------------------------------------------------- placement


def instance_obb(inst, proxies) -> Obb:
    return world_obb(proxies[inst.asset_key], inst.position, inst.rotation)


def place_collision_free(instances, proxies, max_attempts: int, rng: np.random.Generator,
                         camera=None, resample: Optional[Callable] = None, ground: bool = False):
    """Rejection-sample poses so that no two proxy boxes overlap.

    Passive distractors are placed first, then active bodies in draw order.
    Each instance keeps its drawn pose when valid; otherwise ``resample(inst,
    rng)`` proposes a new pose, up to ``max_attempts`` tries in total. An
    instance that never fits is dropped with a warning. With ``camera`` the
    proxy must intersect the view frustum; with ``ground`` it must lie above
    ``z = 0``.

    Returns ``(placed, dropped)``; ``placed`` keeps the input order and ids.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    order = [i for i, inst in enumerate(instances) if inst.role == "distractor"] + \
            [i for i, inst in enumerate(instances) if inst.role != "distractor"]
    boxes: list[Obb] = []
    accepted: dict[int, object] = {}
    dropped: list[dict] = []
    for idx in order:
        inst = instances[idx]
        ok = False
        for attempt in range(max_attempts):
            cand = inst if attempt == 0 or resample is None else resample(inst, rng)
            if attempt > 0 and resample is None:
                break
            box = instance_obb(cand, proxies)
            if ground and box.lowest_z() < 0.0:
                continue
            if camera is not None and not camera.box_in_frustum(box.corners()):
                continue
            if any(obb_penetration(box, other) >= 0.0 for other in boxes):
                continue
            boxes.append(box)
            accepted[idx] = cand
            ok = True
            break
        if not ok:
            log.warning("dropping instance %d (%s): no valid pose after %d attempts",
                        inst.instance_id, inst.asset_key, max_attempts)
            dropped.append({"instance_id": inst.instance_id, "role": inst.role, "asset_key": inst.asset_key,
                            "reason": "placement"})
    placed = [accepted[i] for i in range(len(instances)) if i in accepted]
    return placed, dropped


# ---------------------------------------------------------------- settling


@dataclass(frozen=True)
class SettleOutcome:
    converged: bool
    steps: int
    max_penetration: float
    active_bodies: int

    def to_record(self) -> dict:
        return asdict(self)


def _bodies(instances, proxies, params: SettleParams):
    n = len(instances)
    pos = np.zeros((n, 3))
    quat = np.zeros((n, 4))
    half = np.zeros((n, 3))
    inv_mass = np.zeros(n)
    inv_inertia = np.zeros((n, 3))
    active = np.zeros(n, dtype=np.bool_)
    for k, inst in enumerate(instances):
        box = instance_obb(inst, proxies)
        pos[k] = box.center
        quat[k] = matrix_to_quat(box.rotation)
        half[k] = box.half
        if inst.role in ACTIVE_ROLES:
            active[k] = True
            hx, hy, hz = box.half
            m = params.density * 8.0 * hx * hy * hz
            inv_mass[k] = 1.0 / m
            inv_inertia[k] = [3.0 / (m * (hy * hy + hz * hz)), 3.0 / (m * (hx * hx + hz * hz)),
                              3.0 / (m * (hx * hx + hy * hy))]
    return pos, quat, half, inv_mass, inv_inertia, active


def settle_instances(instances, proxies, params: SettleParams = SettleParams()):
    """Drop the active instances under gravity; returns ``(instances, SettleOutcome)``."""
    instances = list(instances)
    pos, quat, half, inv_mass, inv_inertia, active = _bodies(instances, proxies, params)
    if not active.any():
        return instances, SettleOutcome(True, 0, 0.0, 0)
    vel = np.zeros_like(pos)
    omega = np.zeros_like(pos)
    steps, converged = _kernels.settle_bodies(
        pos, quat, vel, omega, half, inv_mass, inv_inertia, active, params.plane, params.gravity,
        params.timestep, params.max_steps, params.rest_threshold, params.restitution, params.friction,
        params.iterations, params.slop, params.baumgarte, params.margin, params.rest_steps)
    worst = _kernels.resolve_penetrations(pos, quat, half, active, params.plane, params.tolerance, 200)
    if not converged:
        log.warning("settling did not reach rest within %d steps", params.max_steps)
    out = []
    for k, inst in enumerate(instances):
        if not active[k]:
            out.append(inst)
            continue
        proxy = proxies[inst.asset_key]
        R_body = quat_to_matrix(quat[k])
        R = R_body @ proxy.rotation.T
        p = pos[k] - R @ proxy.center
        out.append(replace(inst, position=tuple(float(x) for x in p),
                           euler=tuple(float(x) for x in matrix_to_euler(R))))
    return out, SettleOutcome(bool(converged), int(steps), float(max(worst, 0.0)), int(active.sum()))


def settle(scene, proxies, params: SettleParams = SettleParams()):
    """Return ``scene`` with active instances at rest and the outcome in ``scene.physics``."""
    instances, outcome = settle_instances(scene.instances, proxies, params)
    return replace(scene, instances=tuple(instances), physics=outcome.to_record())


def check_no_penetration(scene_or_instances, proxies, tolerance: float = PENETRATION_TOLERANCE,
                         ground: bool = False):
    """Exhaustive pairwise test; returns ``(ok, [(id_a, id_b, depth), ...])``.

    With ``ground`` every box is also tested against the plane (reported as id 0).
    """
    instances = getattr(scene_or_instances, "instances", scene_or_instances)
    boxes = [(inst.instance_id, instance_obb(inst, proxies)) for inst in instances]
    bad = []
    for i in range(len(boxes)):
        ia, a = boxes[i]
        if ground and -a.lowest_z() > tolerance:
            bad.append((ia, PLANE_ID, -a.lowest_z()))
        for j in range(i + 1, len(boxes)):
            ib, b = boxes[j]
            d = obb_penetration(a, b)
            if d > tolerance:
                bad.append((ia, ib, d))
    return not bad, bad


__all__ = ["SettleParams", "SettleOutcome", "settle", "settle_instances", "place_collision_free",
           "check_no_penetration", "settle_params_from_config", "instance_obb", "PENETRATION_TOLERANCE"]
