"""
Frame-by-frame retargeting pipeline.

Stages run in a fixed order and each one is a ``Transformation`` that
times its own ``_transform`` call. A stage may stop a frame by returning a
``Skip``; later stages then never see that frame, so their sample counts
only include frames that actually entered them.
"""

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Generic, List, Optional, TypeVar

import numpy as np

from .errors import ConfigError, DegenerateGeometry, FormatError, MissingLandmarks, NonFinite
from .geometry import CalibrationTransform, calibration_preset, camera_to_robot, deproject_hand, gripper_depth_fallback
from .gripper import GripperParams, GripperState, apply_gripper_mode, gripper_with_fallback
from .handmodel import FrameDecision, Handedness, SmoothingState2D, ema_smooth_2d, frame_acceptance
from .kinematics import IkParams, Z_FLOOR_M, ema_smooth_joints, forward_kinematics, safety_check, SafetyDecision, solve_ik
from .retarget import target_pose

InT = TypeVar("InT")
OutT = TypeVar("OutT")

STAGE_ORDER = ("camera_input", "hand_detection", "depth_deprojection", "coord_transform", "ik_gripper")


@dataclass
class StageReport:
    name: str
    samples_us: List[float] = field(default_factory=list)

    @property
    def count(self):
        return len(self.samples_us)

    @property
    def total_us(self):
        return float(sum(self.samples_us))

    def summary(self):
        if not self.samples_us:
            return {"mean": 0.0, "p50": 0.0, "p95": 0.0, "max": 0.0}
        s = np.asarray(self.samples_us)
        return {"mean": float(s.mean()), "p50": float(np.percentile(s, 50)),
                "p95": float(np.percentile(s, 95)), "max": float(s.max())}


@dataclass(frozen=True)
class Skip:
    """Returned by a stage to stop processing the current frame."""
    reason: str


class Transformation(Generic[InT, OutT]):
    name = "transformation"

    def __init__(self, clock=time.perf_counter):
        self.report = StageReport(self.name)
        self._clock = clock

    def __call__(self, x):
        t0 = self._clock()
        try:
            return self._transform(x)
        finally:
            self.report.samples_us.append((self._clock() - t0) * 1e6)

    def _transform(self, x):
        raise NotImplementedError


class Status(str, Enum):
    SOLVED = "Solved"
    HELD = "HeldLastValid"
    REJECTED = "Rejected"


@dataclass
class JointCommand:
    timestamp: float
    status: Status
    angles: Optional[np.ndarray] = None  # arm joints then gripper, radians
    normalized: Optional[np.ndarray] = None
    motor: Optional[np.ndarray] = None
    reason: Optional[str] = None
    gripper_level: Optional[int] = None
    ik_iterations: Optional[int] = None
    ik_residual: Optional[float] = None
    ik_converged: Optional[bool] = None
    target_xyz: Optional[np.ndarray] = None
    target_quat: Optional[np.ndarray] = None
    orientation_source: Optional[str] = None

    @property
    def arm_angles(self):
        return None if self.angles is None else self.angles[:-1]

    @property
    def gripper_angle(self):
        return None if self.angles is None else float(self.angles[-1])


@dataclass
class PipelineConfig:
    chain: object
    intrinsics: object = None  # None: take them from the recording
    calibration: CalibrationTransform = field(default_factory=lambda: calibration_preset("so_arm101_glasses"))
    alpha_2d: float = 0.8
    alpha_joints: float = 0.5
    ik: IkParams = field(default_factory=IkParams)
    gripper: GripperParams = field(default_factory=lambda: GripperParams(mode="binary"))
    handedness: Handedness = Handedness.RIGHT
    z_floor: float = Z_FLOOR_M

    def __post_init__(self):
        self.handedness = Handedness(self.handedness)
        if len(self.chain) != self.chain.ee_index + 2:
            raise ConfigError("the pipeline needs a chain whose only joint after the end effector is the gripper")
        for name in ("alpha_2d", "alpha_joints"):
            a = getattr(self, name)
            if not 0.0 < a <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {a}")


def normalize_and_map(angles, lower, upper):
    """Normalise each joint to [0, 1] over its range and map to motor units.

    The last entry is the gripper (0..100); the others are arm joints
    (-100..100).
    """
    angles = np.asarray(angles, dtype=float)
    if not np.all(np.isfinite(angles)):
        raise NonFinite(f"non-finite joint angle in {angles}")
    norm = np.clip((angles - lower) / (upper - lower), 0.0, 1.0)
    motor = np.empty_like(norm)
    motor[:-1] = (norm[:-1] - 0.5) * 200.0
    motor[-1] = norm[-1] * 100.0
    return norm, motor


# -- stages -----------------------------------------------------------------

class CameraInput(Transformation):
    """Materialise one recorded frame: landmarks plus its depth raster."""
    name = "camera_input"

    def _transform(self, frame):
        landmarks, depth = frame
        if callable(depth):
            depth = depth()
        return landmarks, depth


class HandDetection(Transformation):
    """Select the configured hand and smooth its pixels."""
    name = "hand_detection"

    def __init__(self, handedness, alpha, **kw):
        super().__init__(**kw)
        self.handedness = handedness
        self.state = SmoothingState2D(alpha)

    def _transform(self, x):
        landmarks, depth = x
        if landmarks.handedness != self.handedness:
            return Skip("no_hand")
        return ema_smooth_2d(self.state, landmarks), depth


class DepthDeprojection(Transformation):
    name = "depth_deprojection"

    def __init__(self, intrinsics, **kw):
        super().__init__(**kw)
        self.intrinsics = intrinsics

    def _transform(self, x):
        landmarks, depth = x
        depth.check_matches(self.intrinsics)
        pts = deproject_hand(landmarks, depth, self.intrinsics)
        if frame_acceptance(int(pts.valid.sum())) is FrameDecision.REJECT:
            return Skip("insufficient_depth")
        return gripper_depth_fallback(pts, landmarks, self.intrinsics)


class CoordTransform(Transformation):
    name = "coord_transform"

    def __init__(self, calibration, **kw):
        super().__init__(**kw)
        self.calibration = calibration

    def _transform(self, pts):
        return camera_to_robot(pts, self.calibration)


class IkGripper(Transformation):
    """Target pose, IK, joint smoothing and gripper control for one hand."""
    name = "ik_gripper"

    def __init__(self, config, **kw):
        super().__init__(**kw)
        self.cfg = config
        self.chain = config.chain
        self.n_arm = config.chain.ee_index + 1
        self.prev_arm = None
        self.gripper_state = GripperState()

    def _transform(self, h):
        cfg, chain = self.cfg, self.chain
        try:
            target = target_pose(h)
        except (MissingLandmarks, DegenerateGeometry) as exc:
            return Skip(type(exc).__name__)
        if safety_check(target, cfg.z_floor) is SafetyDecision.REJECTED:
            return Skip("below_z_floor")

        rest = chain.mid_range.copy()
        if self.prev_arm is not None:
            rest[:self.n_arm] = self.prev_arm
        ik = solve_ik(chain, target, rest, cfg.ik)
        arm = ema_smooth_joints(self.prev_arm, ik.q[:self.n_arm], cfg.alpha_joints)
        arm = np.clip(arm, chain.lower[:self.n_arm], chain.upper[:self.n_arm])

        q = rest.copy()
        q[:self.n_arm] = arm
        if forward_kinematics(chain, q).position[2] < cfg.z_floor:
            return Skip("fk_below_z_floor")

        phi, level = gripper_with_fallback(h, target.position, self.gripper_state, cfg.gripper)
        q[self.n_arm] = np.clip(apply_gripper_mode(phi, cfg.gripper),
                                chain.lower[self.n_arm], chain.upper[self.n_arm])
        norm, motor = normalize_and_map(q, chain.lower, chain.upper)
        self.prev_arm = arm
        return JointCommand(
            timestamp=0.0, status=Status.SOLVED, angles=q, normalized=norm, motor=motor,
            gripper_level=level, ik_iterations=ik.iterations, ik_residual=ik.final_residual,
            ik_converged=ik.converged, target_xyz=target.position.xyz.copy(),
            target_quat=np.asarray(target.orientation).copy(),
            orientation_source=target.orientation_source.value)


class Pipeline:
    """Stateful processor for one stream. Not safe to share between streams."""

    def __init__(self, config, intrinsics=None, clock=time.perf_counter):
        k = intrinsics if intrinsics is not None else config.intrinsics
        if k is None:
            raise ConfigError("camera intrinsics are required")
        self.config = config
        self.stages = [
            CameraInput(clock=clock),
            HandDetection(config.handedness, config.alpha_2d, clock=clock),
            DepthDeprojection(k, clock=clock),
            CoordTransform(config.calibration, clock=clock),
            IkGripper(config, clock=clock),
        ]
        self.last_valid = None
        self._last_t = None

    @property
    def reports(self):
        return [s.report for s in self.stages]

    def step(self, landmarks, depth):
        """Run one frame through every stage and return exactly one command."""
        t = landmarks.timestamp
        if self._last_t is not None and t < self._last_t:
            raise FormatError(f"timestamps must be monotone: {t} after {self._last_t}")
        self._last_t = t

        x = (landmarks, depth)
        for stage in self.stages:
            x = stage(x)
            if isinstance(x, Skip):
                return self._hold(t, x.reason)
        cmd = replace(x, timestamp=t)
        self.last_valid = cmd
        return cmd

    def _hold(self, t, reason):
        if self.last_valid is None:
            return JointCommand(timestamp=t, status=Status.REJECTED, reason=reason)
        prev = self.last_valid
        return JointCommand(
            timestamp=t, status=Status.HELD, angles=prev.angles.copy(),
            normalized=prev.normalized.copy(), motor=prev.motor.copy(), reason=reason,
            gripper_level=prev.gripper_level)


def process_stream(frames, config, intrinsics=None, clock=time.perf_counter):
    """Retarget an iterable of ``(LandmarkFrame, DepthFrame or loader)`` pairs.

    Returns the command trajectory (one entry per input frame) and the
    per-stage latency reports in pipeline order.
    """
    pipe = Pipeline(config, intrinsics, clock=clock)
    trajectory = [pipe.step(lm, depth) for lm, depth in frames]
    return trajectory, pipe.reports


def latency_report(reports):
    """Per-stage summary rows (pipeline order) and a printable table.

    The total is the mean per-frame time summed over stages, where each
    stage's time is divided by the number of frames entering the pipeline.
    """
    order = {name: i for i, name in enumerate(STAGE_ORDER)}
    reports = sorted(reports, key=lambda r: order.get(r.name, len(order)))
    n_frames = max((r.count for r in reports), default=0)
    rows = []
    for r in reports:
        s = r.summary()
        rows.append({"stage": r.name, "count": r.count, "mean_us": s["mean"], "p50_us": s["p50"],
                     "p95_us": s["p95"], "max_us": s["max"]})
    total = sum(r.total_us for r in reports) / n_frames if n_frames else 0.0

    lines = [f"{'stage':<20}{'n':>6}{'mean_us':>12}{'p50_us':>12}{'p95_us':>12}{'max_us':>12}"]
    for row in rows:
        lines.append(f"{row['stage']:<20}{row['count']:>6}{row['mean_us']:>12.1f}{row['p50_us']:>12.1f}"
                     f"{row['p95_us']:>12.1f}{row['max_us']:>12.1f}")
    lines.append(f"{'total per frame':<20}{n_frames:>6}{total:>12.1f}")
    return {"stages": rows, "frames": n_frames, "total_mean_us": total}, "\n".join(lines)
