"""
Pinhole camera model, depth deprojection and the camera-to-robot transform.

Every point carries a frame tag; transforms check it so a camera-frame
point can never be fed where a robot-frame point is expected.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigError, FrameMismatch, NonPositiveDepth, OutOfBounds
from .handmodel import NUM_LANDMARKS, LandmarkId

DEPTH_RANGE_M = (0.1, 5.0)


class Frame(str, Enum):
    CAMERA = "Camera"
    ROBOT = "Robot"


@dataclass(frozen=True)
class Point3:
    xyz: np.ndarray
    frame: Frame

    def __post_init__(self):
        object.__setattr__(self, "xyz", np.asarray(self.xyz, dtype=float).reshape(3))

    @property
    def x(self):
        return float(self.xyz[0])

    @property
    def y(self):
        return float(self.xyz[1])

    @property
    def z(self):
        return float(self.xyz[2])


@dataclass
class HandPoints3D:
    """Per-landmark 3D points; rows with ``valid[i] == False`` are absent."""

    xyz: np.ndarray
    valid: np.ndarray
    frame: Frame

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=float).reshape(NUM_LANDMARKS, 3)
        self.valid = np.asarray(self.valid, dtype=bool).reshape(NUM_LANDMARKS)

    @classmethod
    def empty(cls, frame):
        return cls(np.zeros((NUM_LANDMARKS, 3)), np.zeros(NUM_LANDMARKS, dtype=bool), frame)

    @classmethod
    def from_points(cls, points, frame):
        """Build from a ``{LandmarkId: xyz}`` mapping; missing ids are absent."""
        h = cls.empty(frame)
        for i, p in points.items():
            h.xyz[int(i)] = p
            h.valid[int(i)] = True
        return h

    def has(self, *ids):
        return all(self.valid[int(i)] for i in ids)

    def get(self, i):
        """Point for landmark ``i`` or None when absent."""
        if not self.valid[int(i)]:
            return None
        return Point3(self.xyz[int(i)], self.frame)

    def copy(self):
        return HandPoints3D(self.xyz.copy(), self.valid.copy(), self.frame)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    depth_scale: float = 1000.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError(f"focal lengths must be positive: fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ConfigError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image")
        if self.depth_scale <= 0:
            raise ConfigError(f"depth_scale must be positive: {self.depth_scale}")


@dataclass
class DepthFrame:
    raster: np.ndarray
    scale: float = 1000.0
    valid_range: tuple = DEPTH_RANGE_M

    def __post_init__(self):
        self.raster = np.asarray(self.raster)
        if self.raster.ndim != 2:
            raise ValueError(f"depth raster must be 2D, got shape {self.raster.shape}")

    @property
    def height(self):
        return self.raster.shape[0]

    @property
    def width(self):
        return self.raster.shape[1]

    def check_matches(self, k):
        if (self.width, self.height) != (k.width, k.height):
            raise ConfigError(
                f"depth raster {self.width}x{self.height} does not match "
                f"intrinsics {k.width}x{k.height}")


def project(p, k):
    """Camera-frame point to continuous pixel coordinates."""
    if p.frame is not Frame.CAMERA:
        raise FrameMismatch(f"project expects a camera-frame point, got {p.frame.value}")
    x, y, z = p.xyz
    if z <= 0:
        raise NonPositiveDepth(f"point at z={z} is behind the camera")
    return k.fx * x / z + k.cx, k.fy * y / z + k.cy


def pixel_index(u, v, width, height):
    """Nearest integer pixel (half rounds up). Raises OutOfBounds outside the raster."""
    col = int(np.floor(u + 0.5))
    row = int(np.floor(v + 0.5))
    if not (0 <= col < width and 0 <= row < height):
        raise OutOfBounds(f"pixel ({u:.2f}, {v:.2f}) outside {width}x{height} raster")
    return row, col


def sample_depth(u, v, d):
    """Metric depth at the nearest pixel, or None when the reading is unusable."""
    row, col = pixel_index(u, v, d.width, d.height)
    raw = d.raster[row, col]
    if raw == 0:
        return None
    z = float(raw) / d.scale
    lo, hi = d.valid_range
    if not lo <= z <= hi:
        return None
    return z


def ray_point(u, v, z, k):
    return Point3(((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z), Frame.CAMERA)


def deproject(u, v, d, k):
    """Back-project pixel ``(u, v)`` with the depth raster; None if depth is invalid."""
    z = sample_depth(u, v, d)
    if z is None:
        return None
    return ray_point(u, v, z, k)


def deproject_hand(frame, d, k):
    """Deproject every valid landmark of ``frame``.

    Landmarks with invalid pixels, pixels outside the raster, or unusable
    depth come back absent.
    """
    out = HandPoints3D.empty(Frame.CAMERA)
    for i in np.flatnonzero(frame.pixel_valid):
        u, v = frame.pixels[i]
        try:
            p = deproject(u, v, d, k)
        except OutOfBounds:
            continue
        if p is not None:
            out.xyz[i] = p.xyz
            out.valid[i] = True
    return out


def gripper_depth_fallback(points, frame, k):
    """Borrow depth between THUMB_MCP and INDEX_FINGER_MCP when exactly one failed.

    The failed landmark keeps its own pixel ray; only Z is substituted.
    Needs the failed landmark's pixel to be valid.
    """
    a, b = int(LandmarkId.THUMB_MCP), int(LandmarkId.INDEX_FINGER_MCP)
    if points.valid[a] == points.valid[b]:
        return points
    bad, good = (a, b) if points.valid[b] else (b, a)
    if not frame.pixel_valid[bad]:
        return points
    out = points.copy()
    u, v = frame.pixels[bad]
    out.xyz[bad] = ray_point(u, v, points.xyz[good][2], k).xyz
    out.valid[bad] = True
    return out


def build_camera_rotation(theta):
    """Camera mount rotation for a downward tilt ``theta`` with mirrored x."""
    s, c = np.sin(theta), np.cos(theta)
    return np.array([[-1.0, 0.0, 0.0],
                     [0.0, s, -c],
                     [0.0, -c, -s]])


def _check_rotation(name, r, tol=1e-9):
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ConfigError(f"{name} must be 3x3")
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol or abs(np.linalg.det(r) - 1.0) > tol:
        raise ConfigError(f"{name} is not a proper rotation")
    return r


@dataclass
class CalibrationTransform:
    """Rigid camera-to-robot map composed from the mount and an optional URDF offset."""

    r_cam: np.ndarray
    t_cam: np.ndarray
    r_urdf: np.ndarray = field(default_factory=lambda: np.eye(3))
    t_urdf: np.ndarray = field(default_factory=lambda: np.zeros(3))
    theta_mount: Optional[float] = None

    def __post_init__(self):
        self.r_cam = _check_rotation("R_cam", self.r_cam)
        self.r_urdf = _check_rotation("R_urdf", self.r_urdf)
        self.t_cam = np.asarray(self.t_cam, dtype=float).reshape(3)
        self.t_urdf = np.asarray(self.t_urdf, dtype=float).reshape(3)

    @classmethod
    def from_mount_angle(cls, theta, t_cam, r_urdf=None, t_urdf=None):
        return cls(build_camera_rotation(theta), t_cam,
                   np.eye(3) if r_urdf is None else r_urdf,
                   np.zeros(3) if t_urdf is None else t_urdf,
                   theta_mount=theta)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @property
    def r_final(self):
        return self.r_urdf @ self.r_cam

    @property
    def t_final(self):
        return self.r_urdf @ self.t_cam + self.t_urdf

    def to_dict(self):
        return {
            "R_cam": self.r_cam.tolist(), "t_cam": self.t_cam.tolist(),
            "R_urdf": self.r_urdf.tolist(), "t_urdf": self.t_urdf.tolist(),
            "theta_mount": self.theta_mount,
        }


# glasses mount on the SO-ARM101 bench, from the CAD assembly
CALIBRATION_PRESETS = {
    "so_arm101_glasses": dict(theta=np.deg2rad(50.0), t_cam=(0.04, -0.049, 0.48)),
}


def calibration_preset(name):
    try:
        params = CALIBRATION_PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown calibration preset {name!r}; known: {sorted(CALIBRATION_PRESETS)}") from None
    return CalibrationTransform.from_mount_angle(params["theta"], params["t_cam"])


def camera_to_robot(p, c):
    """Apply the calibration to a camera-frame Point3 or HandPoints3D."""
    if p.frame is not Frame.CAMERA:
        raise FrameMismatch(f"camera_to_robot expects camera-frame input, got {p.frame.value}")
    r, t = c.r_final, c.t_final
    if isinstance(p, HandPoints3D):
        xyz = np.where(p.valid[:, None], p.xyz @ r.T + t, 0.0)
        return HandPoints3D(xyz, p.valid.copy(), Frame.ROBOT)
    return Point3(r @ p.xyz + t, Frame.ROBOT)


def robot_to_camera(p, c):
    if p.frame is not Frame.ROBOT:
        raise FrameMismatch(f"robot_to_camera expects robot-frame input, got {p.frame.value}")
    r, t = c.r_final, c.t_final
    if isinstance(p, HandPoints3D):
        xyz = np.where(p.valid[:, None], (p.xyz - t) @ r, 0.0)
        return HandPoints3D(xyz, p.valid.copy(), Frame.CAMERA)
    return Point3(r.T @ (p.xyz - t), Frame.CAMERA)
