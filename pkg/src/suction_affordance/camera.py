"""
Pinhole camera model and depth-image geometry.

Conventions used throughout the package:

    - Depth is the z coordinate along the optical axis (not ray length).
    - Pixel (u, v) has its center at (u + 0.5, v + 0.5); u is the column,
      v the row. Camera axes: x right, y down, z forward.
    - An approach direction is parameterized by pitch beta (about camera x)
      and yaw gamma (about camera y), in degrees:

          v = R_y(gamma) @ R_x(beta) @ (0, 0, 1)

      Rotating a cloud into the approach-aligned frame applies the inverse,
      R_x(-beta) @ R_y(-gamma), which maps v onto +z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

ANGLE_LIMIT_DEG = 30.0


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise DomainError("image size must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise DomainError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


@dataclass(frozen=True, eq=False)
class CameraExtrinsics:
    """World-to-camera transform: x_cam = rotation @ x_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if R.shape != (3, 3) or t.shape != (3,):
            raise DomainError("extrinsics need a 3x3 rotation and a 3-vector")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0):
            raise DomainError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise DomainError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts) @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraExtrinsics":
        return cls(np.array(d["rotation"], dtype=float), np.array(d["translation"], dtype=float))

    @classmethod
    def identity(cls) -> "CameraExtrinsics":
        return cls(np.eye(3), np.zeros(3))


@dataclass(eq=False)
class PointCloud:
    """Points in a camera-aligned frame, each tagged with its source pixel.

    ``pixel_index`` is the row-major linear index ``v * width + u``.
    """

    points: np.ndarray
    pixel_index: np.ndarray
    width: int
    height: int

    def __len__(self):
        return len(self.points)

    def translated(self, offset) -> "PointCloud":
        return PointCloud(self.points + np.asarray(offset, dtype=float),
                          self.pixel_index.copy(), self.width, self.height)


@dataclass(eq=False)
class NormalMap:
    normals: np.ndarray  # (H, W, 3)
    valid: np.ndarray  # (H, W) bool


@dataclass(frozen=True, eq=False)
class Pose6D:
    """Grasp target: contact-ring center ``p`` and unit approach direction ``v``."""

    p: np.ndarray
    v: np.ndarray
    beta: float
    gamma: float
    pixel: tuple[int, int] | None = None  # (u, v) the pose was read from

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise DomainError("approach direction must be a unit vector")
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "v", v)


def _check_angles(beta, gamma):
    b = np.asarray(beta, dtype=float)
    g = np.asarray(gamma, dtype=float)
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(g))):
        raise DomainError("approach angles must be finite")
    if np.any(np.abs(b) > ANGLE_LIMIT_DEG) or np.any(np.abs(g) > ANGLE_LIMIT_DEG):
        raise DomainError(f"approach angles must lie within [-{ANGLE_LIMIT_DEG:g}, {ANGLE_LIMIT_DEG:g}] degrees")


def rot_x(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def approach_rotation(beta: float, gamma: float) -> np.ndarray:
    """R_y(gamma) @ R_x(beta); its third column is the approach vector."""
    _check_angles(beta, gamma)
    return rot_y(gamma) @ rot_x(beta)


def approach_vector(beta: float, gamma: float) -> np.ndarray:
    """Unit approach direction for pitch ``beta`` and yaw ``gamma`` (degrees)."""
    _check_angles(beta, gamma)
    b, g = np.deg2rad(beta), np.deg2rad(gamma)
    return np.array([np.cos(b) * np.sin(g), -np.sin(b), np.cos(b) * np.cos(g)])


def pixel_rays(K: CameraIntrinsics) -> np.ndarray:
    """(H, W, 3) rays through pixel centers, scaled so that z == 1."""
    u = (np.arange(K.width) + 0.5 - K.cx) / K.fx
    v = (np.arange(K.height) + 0.5 - K.cy) / K.fy
    rays = np.empty((K.height, K.width, 3))
    rays[..., 0] = u[None, :]
    rays[..., 1] = v[:, None]
    rays[..., 2] = 1.0
    return rays


def backproject_depth(depth: np.ndarray, K: CameraIntrinsics) -> PointCloud:
    """Lift every finite depth pixel to a 3D point in the camera frame."""
    depth = np.asarray(depth, dtype=float)
    if depth.size == 0:
        raise DomainError("empty depth image")
    if depth.shape != (K.height, K.width):
        raise DomainError(f"depth shape {depth.shape} does not match camera {(K.height, K.width)}")
    flat = depth.ravel()
    idx = np.flatnonzero(np.isfinite(flat))
    d = flat[idx]
    u = idx % K.width
    v = idx // K.width
    pts = np.empty((len(idx), 3))
    pts[:, 0] = (u + 0.5 - K.cx) * d / K.fx
    pts[:, 1] = (v + 0.5 - K.cy) * d / K.fy
    pts[:, 2] = d
    return PointCloud(pts, idx.astype(np.int64), K.width, K.height)


def backproject_pixel(u: float, v: float, d: float, K: CameraIntrinsics) -> np.ndarray:
    return np.array([(u + 0.5 - K.cx) * d / K.fx, (v + 0.5 - K.cy) * d / K.fy, d])


def project_point(p, K: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates (u, v) of camera-frame point(s) ``p``; inverse of backprojection."""
    p = np.asarray(p, dtype=float)
    z = p[..., 2]
    if np.any(~(z > 0)):
        raise DomainError("point is behind the camera (z <= 0)")
    u = K.fx * p[..., 0] / z + K.cx - 0.5
    v = K.fy * p[..., 1] / z + K.cy - 0.5
    return np.stack([u, v], axis=-1)


def rotate_cloud(cloud: PointCloud, beta: float, gamma: float, inverse: bool = False) -> PointCloud:
    """Rotate into the frame where the (beta, gamma) approach direction is +z.

    With ``inverse=True`` the opposite rotation is applied, so
    ``rotate_cloud(rotate_cloud(c, b, g), b, g, inverse=True)`` returns ``c``.
    """
    if len(cloud) == 0:
        raise DomainError("cannot rotate an empty cloud")
    R = approach_rotation(beta, gamma)
    # row vectors: p' = R.T @ p  <=>  P' = P @ R
    pts = cloud.points @ (R.T if inverse else R)
    return PointCloud(pts, cloud.pixel_index.copy(), cloud.width, cloud.height)


def organize(cloud: PointCloud) -> np.ndarray:
    """Scatter a cloud back onto its (H, W, 3) pixel grid; empty pixels are NaN."""
    grid = np.full((cloud.height * cloud.width, 3), np.nan)
    grid[cloud.pixel_index] = cloud.points
    return grid.reshape(cloud.height, cloud.width, 3)


def estimate_normals(cloud: PointCloud, width: int | None = None, height: int | None = None) -> NormalMap:
    """Per-pixel normals from central differences on the organized point grid.

    A normal is valid only when all four 4-neighbours exist; border pixels are
    invalid. Normals are oriented toward the camera (negative z).
    """
    if width is not None and height is not None and (width, height) != (cloud.width, cloud.height):
        raise DomainError("cloud grid size does not match the requested size")
    P = organize(cloud)
    H, W = P.shape[:2]
    normals = np.zeros((H, W, 3))
    valid = np.zeros((H, W), dtype=bool)
    if H < 3 or W < 3:
        return NormalMap(normals, valid)
    du = P[1:-1, 2:] - P[1:-1, :-2]
    dv = P[2:, 1:-1] - P[:-2, 1:-1]
    n = np.cross(du, dv)
    norm = np.linalg.norm(n, axis=-1)
    ok = np.isfinite(norm) & (norm > 1e-15)
    n = np.where(ok[..., None], n / np.where(ok, norm, 1.0)[..., None], 0.0)
    n = np.where((n[..., 2] > 0)[..., None], -n, n)
    normals[1:-1, 1:-1] = n
    valid[1:-1, 1:-1] = ok
    return NormalMap(normals, valid)
