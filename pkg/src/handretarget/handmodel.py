"""21-landmark hand schema, 2D landmark smoothing and frame acceptance."""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional

import numpy as np

NUM_LANDMARKS = 21


class LandmarkId(IntEnum):
    WRIST = 0
    THUMB_CMC = 1
    THUMB_MCP = 2
    THUMB_IP = 3
    THUMB_TIP = 4
    INDEX_FINGER_MCP = 5
    INDEX_FINGER_PIP = 6
    INDEX_FINGER_DIP = 7
    INDEX_FINGER_TIP = 8
    MIDDLE_FINGER_MCP = 9
    MIDDLE_FINGER_PIP = 10
    MIDDLE_FINGER_DIP = 11
    MIDDLE_FINGER_TIP = 12
    RING_FINGER_MCP = 13
    RING_FINGER_PIP = 14
    RING_FINGER_DIP = 15
    RING_FINGER_TIP = 16
    PINKY_MCP = 17
    PINKY_PIP = 18
    PINKY_DIP = 19
    PINKY_TIP = 20


class Handedness(str, Enum):
    LEFT = "Left"
    RIGHT = "Right"


@dataclass
class LandmarkFrame:
    """One detector output: pixel coordinates and validity for all 21 landmarks.

    ``handedness`` is None when no hand was detected in the frame.
    """

    timestamp: float
    handedness: Optional[Handedness]
    pixels: np.ndarray
    pixel_valid: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float).reshape(-1, 2)
        self.pixel_valid = np.asarray(self.pixel_valid, dtype=bool).reshape(-1)
        if self.pixels.shape != (NUM_LANDMARKS, 2) or self.pixel_valid.shape != (NUM_LANDMARKS,):
            raise ValueError(f"expected {NUM_LANDMARKS} landmarks, got {self.pixels.shape[0]}")
        if self.handedness is not None:
            self.handedness = Handedness(self.handedness)

    @property
    def valid_count(self):
        return int(self.pixel_valid.sum())

    def __eq__(self, other):
        if not isinstance(other, LandmarkFrame):
            return NotImplemented
        return (self.timestamp == other.timestamp
                and self.handedness == other.handedness
                and np.array_equal(self.pixels, other.pixels)
                and np.array_equal(self.pixel_valid, other.pixel_valid))


@dataclass
class SmoothingState2D:
    alpha: float = 0.8
    previous: Optional[np.ndarray] = None
    # which landmarks currently have a history to blend with
    has_history: np.ndarray = field(default_factory=lambda: np.zeros(NUM_LANDMARKS, dtype=bool))

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    def reset(self):
        self.previous = None
        self.has_history[:] = False


def ema_smooth_2d(state, raw):
    """Exponential smoothing of valid landmark pixels.

    A landmark seen for the first time (or after a dropout) passes through
    unchanged. Invalid landmarks pass through and clear their own history.
    """
    if state.previous is None:
        state.previous = np.zeros((NUM_LANDMARKS, 2))
    blend = raw.pixel_valid & state.has_history
    out = raw.pixels.copy()
    a = state.alpha
    out[blend] = a * raw.pixels[blend] + (1.0 - a) * state.previous[blend]
    state.previous[raw.pixel_valid] = out[raw.pixel_valid]
    state.has_history = raw.pixel_valid.copy()
    return LandmarkFrame(raw.timestamp, raw.handedness, out, raw.pixel_valid.copy())


class FrameDecision(str, Enum):
    ACCEPT = "Accept"
    REJECT = "Reject"


def frame_acceptance(valid_count):
    """Reject a hand when fewer than half of its 21 landmarks are valid."""
    if not 0 <= valid_count <= NUM_LANDMARKS:
        raise ValueError(f"valid_count out of range: {valid_count}")
    # strictly below 10.5
    if 2 * valid_count < NUM_LANDMARKS:
        return FrameDecision.REJECT
    return FrameDecision.ACCEPT
