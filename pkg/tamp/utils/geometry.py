"""
Planar rigid-body geometry.

Poses live in SE(2) and are embedded in 3D with z = 0 and orientation a
rotation about z, so features can report full position/quaternion blocks.
Array helpers operate on (..., 3) arrays of (x, y, theta) rows.
"""

from dataclasses import dataclass
from typing import Iterable

import numpy as np


def wrap_angle(theta):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    wrapped = theta - 2.0 * np.pi * np.ceil((theta - np.pi) / (2.0 * np.pi))
    if np.isscalar(theta):
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class PlanarPose:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "PlanarPose":
        x, y, theta = values
        return cls(x, y, theta)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.theta]

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def compose(self, other: "PlanarPose") -> "PlanarPose":
        """self ⊕ other: `other` expressed in this frame, mapped to the parent frame."""
        c, s = np.cos(self.theta), np.sin(self.theta)
        return PlanarPose(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "PlanarPose":
        c, s = np.cos(self.theta), np.sin(self.theta)
        return PlanarPose(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.theta,
        )

    def relative(self, other: "PlanarPose") -> "PlanarPose":
        """Pose of `other` expressed in this frame (self⁻¹ ⊕ other)."""
        return self.inverse().compose(other)

    def distance(self, other: "PlanarPose") -> float:
        return float(np.hypot(self.x - other.x, self.y - other.y))

    def angle_to(self, other: "PlanarPose") -> float:
        return abs(wrap_angle(other.theta - self.theta))

    def quaternion(self) -> np.ndarray:
        return planar_quaternions(np.array([self.theta]))[0]


IDENTITY = PlanarPose()


def compose_arrays(frames: np.ndarray, poses: np.ndarray) -> np.ndarray:
    """Row-wise frames ⊕ poses for broadcastable (..., 3) arrays."""
    c, s = np.cos(frames[..., 2]), np.sin(frames[..., 2])
    out = np.empty(np.broadcast_shapes(frames.shape, poses.shape))
    out[..., 0] = frames[..., 0] + c * poses[..., 0] - s * poses[..., 1]
    out[..., 1] = frames[..., 1] + s * poses[..., 0] + c * poses[..., 1]
    out[..., 2] = wrap_angle(frames[..., 2] + poses[..., 2])
    return out


def relative_arrays(frames: np.ndarray, poses: np.ndarray) -> np.ndarray:
    """Row-wise poses expressed in frames (frames⁻¹ ⊕ poses)."""
    c, s = np.cos(frames[..., 2]), np.sin(frames[..., 2])
    dx = poses[..., 0] - frames[..., 0]
    dy = poses[..., 1] - frames[..., 1]
    out = np.empty(np.broadcast_shapes(frames.shape, poses.shape))
    out[..., 0] = c * dx + s * dy
    out[..., 1] = -s * dx + c * dy
    out[..., 2] = wrap_angle(poses[..., 2] - frames[..., 2])
    return out


def planar_quaternions(theta: np.ndarray) -> np.ndarray:
    """Unit quaternions (x, y, z, w) for rotations about z, canonicalized to w >= 0."""
    half = 0.5 * wrap_angle(np.asarray(theta, dtype=float))
    quats = np.zeros(half.shape + (4,))
    quats[..., 2] = np.sin(half)
    quats[..., 3] = np.cos(half)
    flip = quats[..., 3] < 0.0
    quats[flip] *= -1.0
    return quats
