"""
Serial-chain kinematics and the damped-least-squares IK solver.

The solver minimises the weighted pose error plus a per-joint Tikhonov
pull toward a rest pose. Each iteration solves

    (J^T W J + Lambda^2) dq = J^T W e - Lambda^2 (q - rest)

with Lambda = diag(max(damping_i, 0.001)), clamps the step element-wise
and projects the iterate back into the joint limits.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, LengthMismatch
from .rotations import axis_angle_matrix, matrix_to_quat, quat_to_matrix, rotation_vector, rpy_matrix

MIN_DAMPING = 0.001
Z_FLOOR_M = 0.05


def _transform(xyz, rpy):
    t = np.eye(4)
    t[:3, :3] = rpy_matrix(rpy)
    t[:3, 3] = xyz
    return t


@dataclass(frozen=True)
class Joint:
    name: str
    origin_xyz: tuple
    origin_rpy: tuple
    axis: tuple
    limit_min: float
    limit_max: float
    damping: float = 0.0

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ConfigError(f"joint {self.name!r}: axis must be a unit 3-vector, got {self.axis}")
        if not self.limit_min < self.limit_max:
            raise ConfigError(f"joint {self.name!r}: limit_min must be below limit_max")
        if self.damping < 0:
            raise ConfigError(f"joint {self.name!r}: negative damping")

    @property
    def effective_damping(self):
        return max(self.damping, MIN_DAMPING)


@dataclass
class Pose:
    position: np.ndarray
    rotation: np.ndarray

    @property
    def quaternion(self):
        return matrix_to_quat(self.rotation)


class KinematicChain:
    """Ordered revolute joints plus a fixed end-effector transform.

    The end effector hangs off joint ``ee_parent`` (default: the last
    joint). Joints after it, such as a gripper jaw, do not move the end
    effector and are left at their rest value by the IK solver.
    """

    def __init__(self, joints, ee_xyz=(0, 0, 0), ee_rpy=(0, 0, 0), ee_parent=None, name="chain"):
        if not joints:
            raise ConfigError("a kinematic chain needs at least one joint")
        names = [j.name for j in joints]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate joint names in {names}")
        self.name = name
        self.joints = tuple(joints)
        self.ee_xyz = tuple(float(v) for v in ee_xyz)
        self.ee_rpy = tuple(float(v) for v in ee_rpy)
        if ee_parent is None:
            ee_parent = names[-1]
        if ee_parent not in names:
            raise ConfigError(f"end-effector parent {ee_parent!r} is not a joint")
        self.ee_parent = ee_parent
        self.ee_index = names.index(ee_parent)

        self._origins = [_transform(j.origin_xyz, j.origin_rpy) for j in self.joints]
        self._axes = [np.asarray(j.axis, dtype=float) for j in self.joints]
        self._ee = _transform(self.ee_xyz, self.ee_rpy)
        self.lower = np.array([j.limit_min for j in self.joints])
        self.upper = np.array([j.limit_max for j in self.joints])
        self.damping = np.array([j.effective_damping for j in self.joints])
        self.active = np.arange(len(self.joints)) <= self.ee_index

    def __len__(self):
        return len(self.joints)

    @property
    def names(self):
        return [j.name for j in self.joints]

    @property
    def mid_range(self):
        return 0.5 * (self.lower + self.upper)

    def clamp(self, q):
        return np.clip(q, self.lower, self.upper)

    def within_limits(self, q, tol=0.0):
        q = np.asarray(q)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def check_length(self, q):
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape[0] != len(self.joints):
            raise LengthMismatch(f"expected {len(self.joints)} joint values, got {q.shape[0]}")
        return q

    def to_dict(self):
        return {
            "name": self.name,
            "joints": [
                {"name": j.name, "origin_xyz_m": list(j.origin_xyz), "origin_rpy_rad": list(j.origin_rpy),
                 "axis_xyz": list(j.axis), "limit_min_rad": j.limit_min, "limit_max_rad": j.limit_max,
                 "damping": j.damping}
                for j in self.joints
            ],
            "end_effector": {"origin_xyz_m": list(self.ee_xyz), "origin_rpy_rad": list(self.ee_rpy),
                             "parent": self.ee_parent},
        }

    @classmethod
    def from_dict(cls, d):
        try:
            joints = [
                Joint(j["name"], tuple(j["origin_xyz_m"]), tuple(j["origin_rpy_rad"]),
                      tuple(j["axis_xyz"]), float(j["limit_min_rad"]), float(j["limit_max_rad"]),
                      float(j.get("damping", 0.0)))
                for j in d["joints"]
            ]
            ee = d.get("end_effector", {})
            return cls(joints, tuple(ee.get("origin_xyz_m", (0, 0, 0))),
                       tuple(ee.get("origin_rpy_rad", (0, 0, 0))), ee.get("parent"),
                       d.get("name", "chain"))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed chain config: {exc!r}") from exc

    def _walk(self, q):
        """World transforms of each joint frame (after its rotation) and the end effector."""
        t = np.eye(4)
        frames = []
        ee = None
        for i, (origin, axis) in enumerate(zip(self._origins, self._axes)):
            t = t @ origin
            rot = np.eye(4)
            rot[:3, :3] = axis_angle_matrix(axis, q[i])
            # the joint origin and its world axis do not depend on q_i
            frames.append((t[:3, 3].copy(), t[:3, :3] @ axis))
            t = t @ rot
            if i == self.ee_index:
                ee = t @ self._ee
        return frames, ee


def forward_kinematics(chain, q):
    q = chain.check_length(q)
    _, ee = chain._walk(q)
    return Pose(ee[:3, 3].copy(), ee[:3, :3].copy())


def jacobian(chain, q):
    """Geometric Jacobian, 6 x N: linear rows first, then angular rows (world frame)."""
    q = chain.check_length(q)
    frames, ee = chain._walk(q)
    p_ee = ee[:3, 3]
    jac = np.zeros((6, len(chain)))
    for i, (p_i, z_i) in enumerate(frames):
        if not chain.active[i]:
            continue
        jac[:3, i] = np.cross(z_i, p_ee - p_i)
        jac[3:, i] = z_i
    return jac


@dataclass(frozen=True)
class IkParams:
    max_iterations: int = 100
    residual_threshold: float = 1e-4
    position_weight: float = 1.0
    orientation_weight: float = 0.5
    step_clamp: float = 0.2
    # stop early once a step moves no joint by more than this (unreachable target)
    stall_tolerance: float = 1e-9

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.residual_threshold <= 0:
            raise ConfigError("residual_threshold must be positive")
        if self.step_clamp <= 0:
            raise ConfigError("step_clamp must be positive")

    @property
    def weights(self):
        return np.array([self.position_weight] * 3 + [self.orientation_weight] * 3)


@dataclass
class IkResult:
    q: np.ndarray
    iterations: int
    final_residual: float
    converged: bool


def pose_error(chain, q, target_position, target_rotation):
    """6-vector: position difference, then rotation vector of R_target R_current^T."""
    pose = forward_kinematics(chain, q)
    return np.concatenate([
        target_position - pose.position,
        rotation_vector(target_rotation @ pose.rotation.T),
    ])


def _target_arrays(target):
    return np.asarray(target.position.xyz, dtype=float), quat_to_matrix(target.orientation)


def dls_step(chain, q, target, rest, params=IkParams()):
    """One unclamped damped-least-squares step over the active joints."""
    p_t, r_t = _target_arrays(target)
    q = chain.check_length(q)
    rest = chain.check_length(rest)
    return _dls_step(chain, q, p_t, r_t, rest, params.weights)


def _dls_step(chain, q, p_t, r_t, rest, w, damping=None):
    act = chain.active
    e = pose_error(chain, q, p_t, r_t)
    jac = jacobian(chain, q)[:, act]
    lam2 = (chain.damping if damping is None else damping)[act] ** 2
    a = jac.T @ (w[:, None] * jac) + np.diag(lam2)
    b = jac.T @ (w * e) - lam2 * (q[act] - rest[act])
    dq = np.zeros(len(chain))
    dq[act] = np.linalg.solve(a, b)
    return dq


def solve_ik(chain, target, rest, params=IkParams()):
    """Iterate damped least squares from ``rest`` toward ``target``.

    Stops when the weighted residual drops below the threshold, when the
    iteration budget runs out, or when the projected step stalls. Never
    raises on non-convergence; the report says whether the threshold was met. The returned configuration is
    always inside the joint limits.
    """
    rest = chain.clamp(chain.check_length(rest))
    p_t, r_t = _target_arrays(target)
    w = params.weights
    sqrt_w = np.sqrt(w)
    q = rest.copy()

    def residual(q):
        return float(np.linalg.norm(sqrt_w * pose_error(chain, q, p_t, r_t)))

    res = residual(q)
    it = 0
    while res >= params.residual_threshold and it < params.max_iterations:
        dq = _dls_step(chain, q, p_t, r_t, rest, w)
        dq = np.clip(dq, -params.step_clamp, params.step_clamp)
        q_next = chain.clamp(q + dq)
        it += 1
        stalled = np.max(np.abs(q_next - q)) < params.stall_tolerance
        q = q_next
        res = residual(q)
        if stalled:
            break
    return IkResult(q, it, res, res < params.residual_threshold)


def ema_smooth_joints(prev, raw, alpha=0.5):
    """alpha * raw + (1 - alpha) * prev; the first frame (prev None) passes through."""
    raw = np.asarray(raw, dtype=float)
    if prev is None:
        return raw.copy()
    prev = np.asarray(prev, dtype=float)
    if prev.shape != raw.shape:
        raise LengthMismatch(f"joint vectors differ in length: {prev.shape} vs {raw.shape}")
    return alpha * raw + (1.0 - alpha) * prev


class SafetyDecision(str, Enum):
    OK = "Ok"
    REJECTED = "Rejected"


def safety_check(target, z_floor=Z_FLOOR_M):
    """Reject targets below the ground-clearance floor."""
    if target.position.z < z_floor:
        return SafetyDecision.REJECTED
    return SafetyDecision.OK
