"""Vector, quaternion, and ray/AABB primitives shared by the graph and view filter."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple


@dataclass(frozen=True)
class Vec3:
    """A point or displacement in the session coordinate frame, in meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"Vec3.{name} must be finite, got {v!r}")

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return self.scaled(1.0 / n)

    def to_list(self) -> list:
        return [self.x, self.y, self.z]

    @classmethod
    def from_list(cls, values) -> "Vec3":
        if len(values) != 3:
            raise ValueError(f"expected 3 components, got {len(values)}")
        return cls(float(values[0]), float(values[1]), float(values[2]))


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion (w, x, y, z) rotating camera-local axes into the world frame."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if not math.isfinite(n) or abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion must be unit-norm, got norm {n!r}")

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def rotate(self, v: Vec3) -> Vec3:
        # v' = q v q* expanded to avoid building intermediate quaternions.
        w, x, y, z = self.w, self.x, self.y, self.z
        tx = 2.0 * (y * v.z - z * v.y)
        ty = 2.0 * (z * v.x - x * v.z)
        tz = 2.0 * (x * v.y - y * v.x)
        return Vec3(
            v.x + w * tx + (y * tz - z * ty),
            v.y + w * ty + (z * tx - x * tz),
            v.z + w * tz + (x * ty - y * tx),
        )

    def to_list(self) -> list:
        return [self.w, self.x, self.y, self.z]

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_list(cls, values) -> "Quaternion":
        if len(values) != 4:
            raise ValueError(f"expected 4 components [w,x,y,z], got {len(values)}")
        return cls(*(float(v) for v in values))

    @classmethod
    def from_yaw(cls, yaw_deg: float) -> "Quaternion":
        """Rotation about +Y; yaw 0 looks down -Z."""
        half = math.radians(yaw_deg) / 2.0
        return cls(math.cos(half), 0.0, math.sin(half), 0.0)


def ray_aabb_distance(
    origin: Vec3,
    direction: Vec3,
    box_min: Vec3,
    box_max: Vec3,
) -> Optional[float]:
    """Distance along a unit-direction ray to the first AABB intersection.

    Slab method. Returns None when the ray misses or the box lies fully
    behind the origin; returns 0.0 when the origin is inside the box.
    """
    t_min = -math.inf
    t_max = math.inf
    for o, d, lo, hi in (
        (origin.x, direction.x, box_min.x, box_max.x),
        (origin.y, direction.y, box_min.y, box_max.y),
        (origin.z, direction.z, box_min.z, box_max.z),
    ):
        if d == 0.0:
            if o < lo or o > hi:
                return None
            continue
        inv = 1.0 / d
        t0 = (lo - o) * inv
        t1 = (hi - o) * inv
        if inv < 0.0:
            t0, t1 = t1, t0
        t_min = max(t_min, t0)
        t_max = min(t_max, t1)
        if t_max < t_min:
            return None
    if t_max < 0.0:
        return None
    return t_min if t_min > 0.0 else 0.0


def aabb_bounds(center: Vec3, half_extents: Vec3) -> Tuple[Vec3, Vec3]:
    return center - half_extents, center + half_extents


def point_in_aabb(p: Vec3, box_min: Vec3, box_max: Vec3) -> bool:
    return (
        box_min.x <= p.x <= box_max.x
        and box_min.y <= p.y <= box_max.y
        and box_min.z <= p.z <= box_max.z
    )
