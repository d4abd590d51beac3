"""Viewpoint-aware candidate filtering: frustum test plus occlusion culling.

Occlusion follows the depth-test inequality: with D_A the camera-to-object
distance, D_B the nearest ray hit on any other object's AABB, and the scale
slack set to the target's largest half-extent, the object counts as occluded
when D_A > D_B + slack. Objects are tested at their center point only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .geometry import Quaternion, Vec3, aabb_bounds, ray_aabb_distance
from .scene_graph import ObjectNode, RelationalGraph


@dataclass(frozen=True)
class OcclusionInputs:
    """Depth-test operands: camera-to-object distance, nearest ray hit on any
    other object (inf when nothing blocks), and the target's scale slack."""

    cam_to_obj_dist: float
    ray_hit_dist: float
    target_obj_scale: float

    def __post_init__(self):
        if min(self.cam_to_obj_dist, self.ray_hit_dist, self.target_obj_scale) < 0:
            raise ValueError("occlusion distances must be non-negative")

    @property
    def occluded(self) -> bool:
        return self.cam_to_obj_dist > self.ray_hit_dist + self.target_obj_scale


@dataclass
class CameraPose:
    position: Vec3
    orientation: Quaternion = field(default_factory=Quaternion.identity)
    h_fov: float = 104.0
    v_fov: float = 90.0
    near: float = 0.1
    far: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got {self.near}, {self.far}")
        for name in ("h_fov", "v_fov"):
            fov = getattr(self, name)
            if not (0.0 < fov < 180.0):
                raise ValueError(f"{name} must be in (0, 180), got {fov}")

    def to_camera_space(self, p: Vec3) -> Vec3:
        """World point into camera-local coordinates (camera looks down -Z)."""
        return self.orientation.conjugate().rotate(p - self.position)

    def to_dict(self) -> dict:
        return {
            "position": self.position.to_list(),
            "orientation": self.orientation.to_list(),
            "h_fov": self.h_fov,
            "v_fov": self.v_fov,
            "near": self.near,
            "far": self.far,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CameraPose":
        return cls(
            position=Vec3.from_list(doc["position"]),
            orientation=Quaternion.from_list(
                doc.get("orientation", [1.0, 0.0, 0.0, 0.0])
            ),
            h_fov=float(doc.get("h_fov", 104.0)),
            v_fov=float(doc.get("v_fov", 90.0)),
            near=float(doc.get("near", 0.1)),
            far=float(doc.get("far", 10.0)),
        )


def in_frustum(cam: CameraPose, node: ObjectNode) -> bool:
    """True iff the node center lies inside the camera's perspective frustum."""
    p = cam.to_camera_space(node.center)
    depth = -p.z
    if depth < cam.near or depth > cam.far:
        return False
    half_w = depth * math.tan(math.radians(cam.h_fov) / 2.0)
    half_h = depth * math.tan(math.radians(cam.v_fov) / 2.0)
    return abs(p.x) <= half_w and abs(p.y) <= half_h


def occluder_hit_distance(
    cam: CameraPose, target: ObjectNode, others: Sequence[ObjectNode]
) -> float:
    """Distance to the nearest AABB hit along the ray to the target center; inf if none."""
    to_target = target.center - cam.position
    dist = to_target.norm()
    if dist == 0.0:
        return math.inf
    direction = to_target.scaled(1.0 / dist)
    nearest = math.inf
    for other in others:
        if other.id == target.id:
            continue
        lo, hi = aabb_bounds(other.center, other.half_extents)
        t = ray_aabb_distance(cam.position, direction, lo, hi)
        if t is not None and t < nearest:
            nearest = t
    return nearest


def occlusion_inputs(
    cam: CameraPose, target: ObjectNode, occluders: Sequence[ObjectNode]
) -> OcclusionInputs:
    return OcclusionInputs(
        cam_to_obj_dist=(target.center - cam.position).norm(),
        ray_hit_dist=occluder_hit_distance(cam, target, occluders),
        target_obj_scale=max(
            target.half_extents.x, target.half_extents.y, target.half_extents.z
        ),
    )


def is_occluded(cam: CameraPose, target: ObjectNode, scene: RelationalGraph) -> bool:
    return occlusion_inputs(cam, target, list(scene.nodes.values())).occluded


def filter_visible(
    cam: Optional[CameraPose],
    nodes: Sequence[ObjectNode],
    scene: Optional[RelationalGraph] = None,
) -> List[ObjectNode]:
    """Keep nodes in view; no camera means no filtering.

    Occluders come from the full scene when given, so an out-of-candidate
    object can still hide a candidate.
    """
    if cam is None:
        return list(nodes)
    kept = []
    occluders = list(scene.nodes.values()) if scene is not None else list(nodes)
    for node in nodes:
        if not in_frustum(cam, node):
            continue
        if occlusion_inputs(cam, node, occluders).occluded:
            continue
        kept.append(node)
    return kept
