"""Kinematic replay check of a joint trajectory before it goes to hardware."""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, LengthMismatch
from ..kinematics import Z_FLOOR_M, forward_kinematics

# Servo datasheet limits are in RPM and 1/254 register steps; these are
# conservative radian values for validation only.
ARM_MAX_VELOCITY = 4.0       # rad/s
GRIPPER_MAX_VELOCITY = 8.0   # rad/s
ARM_MAX_ACCELERATION = 60.0  # rad/s^2
GRIPPER_MAX_ACCELERATION = 120.0


@dataclass(frozen=True)
class ReplayLimits:
    max_velocity: tuple
    max_acceleration: tuple

    def __post_init__(self):
        v = np.asarray(self.max_velocity, dtype=float)
        a = np.asarray(self.max_acceleration, dtype=float)
        if v.shape != a.shape or np.any(v <= 0) or np.any(a <= 0):
            raise ConfigError("replay limits must be positive and have one value per joint")

    @classmethod
    def defaults(cls, n_arm, n_gripper=1, arm_velocity=ARM_MAX_VELOCITY,
                 gripper_velocity=GRIPPER_MAX_VELOCITY, arm_acceleration=ARM_MAX_ACCELERATION,
                 gripper_acceleration=GRIPPER_MAX_ACCELERATION):
        return cls((arm_velocity,) * n_arm + (gripper_velocity,) * n_gripper,
                   (arm_acceleration,) * n_arm + (gripper_acceleration,) * n_gripper)

    @classmethod
    def for_chain(cls, chain, **kw):
        n_arm = chain.ee_index + 1
        return cls.defaults(n_arm, len(chain) - n_arm, **kw)


def fk_replay_validate(trajectory, chain, limits=None, fps=30.0, z_floor=Z_FLOOR_M):
    """Replay commands through FK and flag anything unsafe.

    Frames without angles (rejected before any command existed) are skipped.
    Velocities and accelerations are finite differences between consecutive
    commanded frames, scaled by the frame gap. Returns a JSON-ready report;
    ``report["ok"]`` is False when any flag was raised.
    """
    if fps <= 0:
        raise ConfigError("fps must be positive")
    if limits is None:
        limits = ReplayLimits.for_chain(chain)
    vmax = np.asarray(limits.max_velocity, dtype=float)
    amax = np.asarray(limits.max_acceleration, dtype=float)
    if vmax.shape[0] != len(chain):
        raise LengthMismatch(f"replay limits cover {vmax.shape[0]} joints, chain has {len(chain)}")
    names = chain.names
    flags = []
    ee = []
    max_vel = np.zeros(len(chain))
    prev = None  # (frame, q, velocity or None)

    for i, cmd in enumerate(trajectory):
        if cmd.angles is None:
            ee.append(None)
            continue
        q = chain.check_length(cmd.angles)
        pos = forward_kinematics(chain, q).position
        ee.append([float(v) for v in pos])
        for j in np.flatnonzero((q < chain.lower) | (q > chain.upper)):
            flags.append({"frame": i, "kind": "joint_limit", "joint": names[j], "value": float(q[j]),
                          "limit": [float(chain.lower[j]), float(chain.upper[j])]})
        if pos[2] < z_floor:
            flags.append({"frame": i, "kind": "z_floor", "joint": None, "value": float(pos[2]),
                          "limit": z_floor})
        vel = None
        if prev is not None:
            gap = i - prev[0]
            vel = (q - prev[1]) * fps / gap
            max_vel = np.maximum(max_vel, np.abs(vel))
            for j in np.flatnonzero(np.abs(vel) > vmax):
                flags.append({"frame": i, "kind": "velocity", "joint": names[j], "value": float(vel[j]),
                              "limit": float(vmax[j])})
            if prev[2] is not None:
                acc = (vel - prev[2]) * fps / gap
                for j in np.flatnonzero(np.abs(acc) > amax):
                    flags.append({"frame": i, "kind": "acceleration", "joint": names[j],
                                  "value": float(acc[j]), "limit": float(amax[j])})
        prev = (i, q, vel)

    return {
        "frames": len(trajectory),
        "commanded_frames": sum(p is not None for p in ee),
        "fps": float(fps),
        "max_abs_velocity": {n: float(v) for n, v in zip(names, max_vel)},
        "ee_positions": ee,
        "flags": flags,
        "ok": not flags,
    }
