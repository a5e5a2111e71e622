"""End-effector target construction from robot-frame hand landmarks."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateGeometry, FrameMismatch, MissingLandmarks
from .geometry import Frame, HandPoints3D, Point3
from .handmodel import LandmarkId as L
from .rotations import matrix_to_quat, quat_to_matrix

__all__ = ["HandPoints3D", "OrientationSource", "TargetPose",
           "target_position", "target_frame", "target_orientation", "target_pose"]

# below this the cross product of gripper axis and finger direction is treated as parallel
PARALLEL_EPS = 1e-8
COINCIDENT_EPS = 1e-9


class OrientationSource(str, Enum):
    PRIMARY = "Primary"
    WRIST_FALLBACK = "WristFallback"


@dataclass(frozen=True)
class TargetPose:
    position: Point3
    orientation: np.ndarray  # (w, x, y, z)
    orientation_source: OrientationSource = OrientationSource.PRIMARY

    @property
    def rotation(self):
        return quat_to_matrix(self.orientation)


def _require_robot(h):
    if h.frame is not Frame.ROBOT:
        raise FrameMismatch(f"targets are built from robot-frame landmarks, got {h.frame.value}")


def target_position(h):
    """Midpoint of the thumb and index MCP joints."""
    _require_robot(h)
    if not h.has(L.THUMB_MCP, L.INDEX_FINGER_MCP):
        raise MissingLandmarks("THUMB_MCP and INDEX_FINGER_MCP are required for the target position")
    mid = 0.5 * (h.xyz[L.THUMB_MCP] + h.xyz[L.INDEX_FINGER_MCP])
    return Point3(mid, Frame.ROBOT)


def _unit(v, what):
    n = np.linalg.norm(v)
    if n < COINCIDENT_EPS:
        raise DegenerateGeometry(f"{what} has zero length")
    return v / n


def target_frame(h):
    """Rotation matrix ``[e1 e2 e3]`` of the hand grasp frame and where it came from.

    e1 runs thumb MCP -> index MCP, the mean finger direction fixes the
    plane, and e2 = e3 x e1 keeps the frame right-handed. Without both
    fingertips, the wrist-to-target direction stands in for the fingers.
    """
    _require_robot(h)
    p_t = target_position(h).xyz
    thumb, index = h.xyz[L.THUMB_MCP], h.xyz[L.INDEX_FINGER_MCP]
    e1 = _unit(index - thumb, "MCP separation")

    if h.has(L.THUMB_TIP, L.INDEX_FINGER_TIP):
        d = 0.5 * ((h.xyz[L.THUMB_TIP] - thumb) + (h.xyz[L.INDEX_FINGER_TIP] - index))
        source = OrientationSource.PRIMARY
    elif h.has(L.WRIST):
        d = p_t - h.xyz[L.WRIST]
        source = OrientationSource.WRIST_FALLBACK
    else:
        raise MissingLandmarks("fingertips missing and no WRIST for the fallback orientation")
    d_hat = _unit(d, "finger direction")

    c = np.cross(e1, d_hat)
    n = np.linalg.norm(c)
    if n < PARALLEL_EPS:
        raise DegenerateGeometry("finger direction is parallel to the MCP axis")
    e3 = c / n
    e2 = np.cross(e3, e1)
    return np.column_stack([e1, e2, e3]), source


def target_orientation(h):
    r, source = target_frame(h)
    return matrix_to_quat(r), source


def target_pose(h):
    r, source = target_frame(h)
    return TargetPose(target_position(h), matrix_to_quat(r), source)
