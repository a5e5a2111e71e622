"""Gripper aperture from thumb/index geometry, its fallback chain, and output modes."""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigError, DegenerateVectors
from .handmodel import LandmarkId as L

PHI_MIN = 0.087
PHI_MAX = 1.658
CALIBRATION_OFFSET = -0.175
BINARY_THRESHOLD = np.deg2rad(60.0)


class GripperMode(str, Enum):
    NORMAL = "normal"
    BINARY = "binary"
    OFFSET = "offset"


@dataclass(frozen=True)
class GripperParams:
    phi_min: float = PHI_MIN
    phi_max: float = PHI_MAX
    calibration_offset: float = CALIBRATION_OFFSET
    binary_threshold: float = BINARY_THRESHOLD
    mode: GripperMode = GripperMode.NORMAL
    mode_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", GripperMode(self.mode))
        if not self.phi_min < self.phi_max:
            raise ConfigError("phi_min must be below phi_max")
        if not self.phi_min < self.binary_threshold < self.phi_max:
            raise ConfigError("binary_threshold must lie strictly inside (phi_min, phi_max)")

    @property
    def mid_open(self):
        return 0.5 * (self.phi_min + self.phi_max)

    def with_mode(self, spec):
        """Return a copy with the mode parsed from ``normal``, ``binary`` or ``offset:<rad>``."""
        return GripperParams(self.phi_min, self.phi_max, self.calibration_offset,
                             self.binary_threshold, *parse_mode(spec))


def parse_mode(spec):
    spec = spec.strip().lower()
    if spec in ("normal", "binary"):
        return GripperMode(spec), 0.0
    if spec.startswith("offset:"):
        try:
            return GripperMode.OFFSET, float(spec.split(":", 1)[1])
        except ValueError:
            pass
    raise ConfigError(f"gripper mode must be normal, binary or offset:<rad>, got {spec!r}")


def mode_string(params):
    if params.mode is GripperMode.OFFSET:
        return f"offset:{params.mode_offset!r}"
    return params.mode.value


@dataclass
class GripperState:
    last_valid_angle: Optional[float] = None
    level_used: Optional[int] = None


def gripper_angle(thumb, index, target, params=GripperParams()):
    """Angle at ``target`` between the thumb and index directions.

    The raw angle is clamped to [0, pi/2], shifted by the calibration
    offset, then clamped to the gripper limits. Order matters at the
    boundaries.
    """
    a = np.asarray(getattr(thumb, "xyz", thumb), dtype=float) - np.asarray(getattr(target, "xyz", target), dtype=float)
    b = np.asarray(getattr(index, "xyz", index), dtype=float) - np.asarray(getattr(target, "xyz", target), dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-9 or nb < 1e-9:
        raise DegenerateVectors("thumb or index coincides with the gripper base")
    cos = np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0)
    phi = min(max(float(np.arccos(cos)), 0.0), np.pi / 2)
    phi += params.calibration_offset
    return min(max(phi, params.phi_min), params.phi_max)


_LEVEL_PAIRS = {
    1: (L.THUMB_TIP, L.INDEX_FINGER_TIP),
    2: (L.THUMB_IP, L.INDEX_FINGER_DIP),
}


def gripper_with_fallback(h, target, state, params=GripperParams()):
    """Angle plus the fallback level that produced it (1..4).

    Levels: fingertips, then knuckles (IP/DIP), then the last valid angle,
    then the mid-open default. Only levels 1 and 2 refresh the history. A
    pair that is present but degenerate falls through to the next level.
    """
    for level, (a, b) in _LEVEL_PAIRS.items():
        if not h.has(a, b):
            continue
        try:
            phi = gripper_angle(h.xyz[a], h.xyz[b], target, params)
        except DegenerateVectors:
            continue
        state.last_valid_angle = phi
        state.level_used = level
        return phi, level
    if state.last_valid_angle is not None:
        state.level_used = 3
        return state.last_valid_angle, 3
    state.level_used = 4
    return params.mid_open, 4


def apply_gripper_mode(phi, params=GripperParams()):
    if params.mode is GripperMode.BINARY:
        return params.phi_max if phi >= params.binary_threshold else params.phi_min
    if params.mode is GripperMode.OFFSET:
        return min(max(phi + params.mode_offset, params.phi_min), params.phi_max)
    return phi
