"""Planar effector shapes and their signed distance to a circular object."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from robustpush import _kernels


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    return float(_kernels.wrap_angle(float(a)))


@dataclass(frozen=True)
class CircleGeom:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"circle radius must be positive, got {self.radius}")

    @property
    def kind(self) -> int:
        return _kernels.CIRCLE

    @property
    def params(self) -> tuple[float, float]:
        return (float(self.radius), 0.0)

    @property
    def contact_radius(self) -> float:
        return float(self.radius)


@dataclass(frozen=True)
class RectGeom:
    half_extents: tuple[float, float]

    def __post_init__(self):
        hx, hy = self.half_extents
        if not (hx > 0 and hy > 0):
            raise ValueError(f"rectangle half extents must be positive, got {self.half_extents}")
        object.__setattr__(self, "half_extents", (float(hx), float(hy)))

    @property
    def kind(self) -> int:
        return _kernels.RECT

    @property
    def params(self) -> tuple[float, float]:
        return self.half_extents

    @property
    def contact_radius(self) -> float:
        # thickness of the pushing face
        return min(self.half_extents)


Geom = CircleGeom | RectGeom


@dataclass(frozen=True)
class EffectorPose:
    position: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(2)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def as_row(self) -> np.ndarray:
        return np.array([self.position[0], self.position[1], self.yaw])


@dataclass(frozen=True)
class ContactInfo:
    signed_distance: float
    normal: np.ndarray = field(repr=False)
    witness_point: np.ndarray = field(repr=False)


def signed_distance(effector_geom: Geom, pose: EffectorPose, obj_center, obj_radius: float) -> ContactInfo:
    """Signed distance between an effector and a circular object.

    Negative values mean the shapes overlap. The normal points from the
    effector surface toward the object center and the witness point is the
    closest point on the effector boundary.
    """
    ox, oy = np.asarray(obj_center, dtype=float).reshape(2)
    p0, p1 = effector_geom.params
    d, nx, ny, wx, wy = _kernels.sd_effector(
        effector_geom.kind, p0, p1, pose.position[0], pose.position[1], pose.yaw,
        ox, oy, float(obj_radius))
    return ContactInfo(float(d), np.array([nx, ny]), np.array([wx, wy]))


def contact_frame(info: ContactInfo) -> tuple[np.ndarray, np.ndarray]:
    """Right-handed (normal, tangent) pair for a contact."""
    n = np.asarray(info.normal, dtype=float)
    norm = math.hypot(n[0], n[1])
    if not norm > 0:
        raise ValueError("contact normal is not finite")
    n = n / norm
    return n, np.array([-n[1], n[0]])
