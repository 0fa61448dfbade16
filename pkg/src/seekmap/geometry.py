"""Rigid-body poses and the pinhole sensor model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9


class GeometryError(ValueError):
    pass


@dataclass
class Pose:
    """World-from-frame rigid transform: unit quaternion (w,x,y,z) + translation in meters."""

    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    trans: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.quat = np.asarray(self.quat, dtype=np.float64).copy()
        self.trans = np.asarray(self.trans, dtype=np.float64).copy()
        if self.quat.shape != (4,) or self.trans.shape != (3,):
            raise GeometryError("pose needs a 4-quaternion and a 3-translation")
        if not np.all(np.isfinite(self.quat)) or not np.all(np.isfinite(self.trans)):
            raise GeometryError("non-finite pose")
        n = float(np.linalg.norm(self.quat))
        if abs(n - 1.0) > 1e-6:
            raise GeometryError(f"quaternion norm {n} too far from 1")
        self.quat /= n

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_matrix(rot: np.ndarray, trans=(0.0, 0.0, 0.0)) -> "Pose":
        """Pose from a 3x3 rotation matrix (Shepperd's method)."""
        m = np.asarray(rot, dtype=np.float64)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = math.sqrt(tr + 1.0) * 2
            q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s])
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
            q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s])
        return Pose(q / np.linalg.norm(q), np.asarray(trans, dtype=np.float64))

    @staticmethod
    def from_yaw(yaw: float, trans=(0.0, 0.0, 0.0)) -> "Pose":
        """Rotation about +z by yaw radians."""
        return Pose(np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)]), np.asarray(trans, dtype=np.float64))

    @property
    def yaw(self) -> float:
        w, x, y, z = self.quat
        return math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.quat
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def compose(self, other: "Pose") -> "Pose":
        w1, x1, y1, z1 = self.quat
        w2, x2, y2, z2 = other.quat
        q = np.array(
            [
                w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            ]
        )
        q /= np.linalg.norm(q)
        return Pose(q, self.rotation_matrix() @ other.trans + self.trans)

    def inverse(self) -> "Pose":
        w, x, y, z = self.quat
        qinv = np.array([w, -x, -y, -z])
        rinv = self.rotation_matrix().T
        return Pose(qinv, -(rinv @ self.trans))

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply to (3,) or (N,3) points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation_matrix().T + self.trans

    def approx_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        dq = min(np.linalg.norm(self.quat - other.quat), np.linalg.norm(self.quat + other.quat))
        return dq <= tol and np.linalg.norm(self.trans - other.trans) <= tol

    def to_array(self) -> np.ndarray:
        """7-vector (qw,qx,qy,qz,tx,ty,tz)."""
        return np.concatenate([self.quat, self.trans])

    @staticmethod
    def from_array(a) -> "Pose":
        a = np.asarray(a, dtype=np.float64)
        return Pose(a[:4], a[4:7])


@dataclass
class CameraModel:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    depth_min: float = 0.1
    depth_max: float = 8.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point outside image")
        if not self.depth_min < self.depth_max:
            raise GeometryError("depth_min must be < depth_max")

    def ray_directions(self) -> np.ndarray:
        """(H, W, 3) unnormalized camera-frame ray directions through pixel centers, z = 1."""
        u = (np.arange(self.width) + 0.5 - self.cx) / self.fx
        v = (np.arange(self.height) + 0.5 - self.cy) / self.fy
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu, vv, np.ones_like(uu)], axis=-1)

    def scaled(self, factor: float) -> "CameraModel":
        """Resolution-scaled copy (intrinsics scale with the image)."""
        return CameraModel(
            int(round(self.width * factor)),
            int(round(self.height * factor)),
            self.fx * factor,
            self.fy * factor,
            self.cx * factor,
            self.cy * factor,
            self.depth_min,
            self.depth_max,
        )


def camera_pose(position, yaw: float) -> Pose:
    """World-from-camera pose for a body at position with heading yaw.

    Camera convention: +z forward (horizontal), +x right, +y down; world z is up.
    """
    c, s = math.cos(yaw), math.sin(yaw)
    forward = np.array([c, s, 0.0])
    right = np.array([s, -c, 0.0])
    down = np.array([0.0, 0.0, -1.0])
    rot = np.stack([right, down, forward], axis=1)
    return Pose.from_matrix(rot, position)


def validate_depth(depth: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Check dimensions against the camera and return the float32 view; NaN/inf = invalid."""
    d = np.asarray(depth, dtype=np.float32)
    if d.shape != (cam.height, cam.width):
        raise GeometryError(f"depth shape {d.shape} does not match camera {(cam.height, cam.width)}")
    return d
