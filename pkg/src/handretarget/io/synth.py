"""
Synthetic recordings with known ground truth.

A planar model hand is placed so its grasp frame coincides with an
end-effector pose the arm can reach, then pushed back through the inverse
calibration and the pinhole model into pixels and a depth raster. The
pose that generated each frame is kept as ground truth.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, OutOfBounds, Unreachable
from ..geometry import (
    DEPTH_RANGE_M, CameraIntrinsics, DepthFrame, Frame, HandPoints3D, Point3, calibration_preset,
    pixel_index, project, robot_to_camera,
)
from ..handmodel import Handedness, LandmarkFrame, LandmarkId as L
from ..kinematics import IkParams, forward_kinematics, solve_ik
from ..retarget import TargetPose
from ..rotations import matrix_to_quat
from .formats import _write_json, bundled_chain, write_recording

SCENARIOS = ("static_grasp", "line_sweep", "grasp_cycle")

# arm pose whose grasp frame sits in front of the glasses camera, clear of the floor
DEFAULT_POSE = (0.22, 0.09, -0.12, 1.0, 0.57, 0.0)
OPEN_APERTURE = np.deg2rad(85.0)
CLOSED_APERTURE = np.deg2rad(30.0)


def default_intrinsics():
    return CameraIntrinsics(fx=610.0, fy=610.0, cx=320.0, cy=240.0, width=640, height=480)


@dataclass(frozen=True)
class HandDims:
    mcp_span: float = 0.08
    finger_length: float = 0.07
    wrist_offset: float = 0.09


def _splay(aperture, dims):
    """Finger splay so the tip vectors seen from the MCP midpoint open by ``aperture``."""
    t = np.tan(aperture / 2)
    ratio = dims.mcp_span / (2 * dims.finger_length * np.hypot(1.0, t))
    if ratio > 1.0:
        raise ConfigError(f"aperture {aperture} not reachable with these hand dimensions")
    return np.arctan(t) - np.arcsin(ratio)


def hand_landmarks(position, rotation, aperture, dims=HandDims()):
    """21 robot-frame landmarks for a hand whose grasp frame is ``(position, rotation)``.

    In the grasp frame x runs thumb MCP -> index MCP, y is the finger
    direction and z their normal. ``aperture`` is the angle at the MCP
    midpoint between the two fingertips.
    """
    s, length = dims.mcp_span, dims.finger_length
    b = _splay(aperture, dims)
    thumb_dir = np.array([-np.sin(b), np.cos(b), 0.0])
    index_dir = np.array([np.sin(b), np.cos(b), 0.0])
    local = np.zeros((21, 3))
    local[L.WRIST] = (0.0, -dims.wrist_offset, 0.0)
    local[L.THUMB_MCP] = (-s / 2, 0.0, 0.0)
    local[L.THUMB_CMC] = 0.5 * (local[L.WRIST] + local[L.THUMB_MCP]) + (-0.01, 0.0, 0.005)
    local[L.THUMB_IP] = local[L.THUMB_MCP] + 0.55 * length * thumb_dir
    local[L.THUMB_TIP] = local[L.THUMB_MCP] + length * thumb_dir
    fingers = [
        (L.INDEX_FINGER_MCP, (s / 2, 0.0), 1.0),
        (L.MIDDLE_FINGER_MCP, (s / 2 + 0.02, -0.005), 1.05),
        (L.RING_FINGER_MCP, (s / 2 + 0.04, -0.012), 0.97),
        (L.PINKY_MCP, (s / 2 + 0.058, -0.022), 0.8),
    ]
    for mcp, (x, y), scale in fingers:
        base = np.array([x, y, 0.0])
        local[mcp] = base
        for k, frac in enumerate((0.4, 0.7, 1.0), start=1):
            local[mcp + k] = base + frac * scale * length * index_dir
    return np.asarray(position) + local @ np.asarray(rotation).T


def render(points_robot, calibration, intrinsics, background_m=1.5, patch_radius=3, scale=1000.0):
    """Project robot-frame landmarks to pixels and paint a matching depth raster.

    Each landmark gets a small disk of its own depth, far ones first, then
    every centre pixel is stamped again so a landmark always reads its own
    depth unless a nearer landmark lands on the very same pixel.
    """
    k = intrinsics
    cam = robot_to_camera(HandPoints3D(points_robot, np.ones(21, bool), Frame.ROBOT), calibration).xyz
    lo, hi = DEPTH_RANGE_M
    pixels = np.zeros((21, 2))
    cells = []
    for i, p in enumerate(cam):
        if not lo <= p[2] <= hi:
            raise Unreachable(f"landmark {L(i).name} at depth {p[2]:.3f} m is outside [{lo}, {hi}] m")
        u, v = project(Point3(p, Frame.CAMERA), k)
        try:
            cells.append(pixel_index(u, v, k.width, k.height))
        except OutOfBounds as exc:
            raise Unreachable(f"landmark {L(i).name} leaves the camera view: {exc}") from None
        pixels[i] = (u, v)

    raster = np.full((k.height, k.width), int(round(background_m * scale)), dtype=np.uint16)
    raw = np.array([int(round(z * scale)) for z in cam[:, 2]])
    order = np.argsort(-cam[:, 2], kind="stable")
    r = patch_radius
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    disk = (xx ** 2 + yy ** 2) <= r * r
    for i in order:
        row, col = cells[i]
        rows, cols = row + yy[disk], col + xx[disk]
        keep = (rows >= 0) & (rows < k.height) & (cols >= 0) & (cols < k.width)
        raster[rows[keep], cols[keep]] = raw[i]
    for i in order:
        raster[cells[i]] = raw[i]
    return pixels, DepthFrame(raster, scale)


@dataclass
class SyntheticRecording:
    scenario: str
    intrinsics: CameraIntrinsics
    landmarks: list
    depths: list
    ground_truth: list = field(default_factory=list)
    fps: float = 30.0

    def frames(self):
        return list(zip(self.landmarks, self.depths))


def _poses(scenario, chain, n, pose):
    """Per-frame (q, position, rotation, aperture) for a scenario."""
    q0 = chain.clamp(np.asarray(pose, dtype=float))
    p0 = forward_kinematics(chain, q0)
    if scenario == "static_grasp":
        return [(q0, p0.position, p0.rotation, OPEN_APERTURE)] * n
    if scenario == "grasp_cycle":
        half = 15
        return [(q0, p0.position, p0.rotation,
                 OPEN_APERTURE if (f // half) % 2 == 0 else CLOSED_APERTURE) for f in range(n)]
    if scenario == "line_sweep":
        # sweep 10 cm along robot x; orientation is whatever the arm reaches on the way
        params = IkParams(orientation_weight=1e-3, residual_threshold=1e-6, max_iterations=200)
        out = []
        q = q0
        for f in range(n):
            s = -0.05 + 0.1 * f / max(n - 1, 1)
            goal = p0.position + np.array([s, 0.0, 0.0])
            tgt = TargetPose(Point3(goal, Frame.ROBOT), p0.quaternion)
            q = solve_ik(chain, tgt, q, params).q
            fk = forward_kinematics(chain, q)
            out.append((q, fk.position, fk.rotation, OPEN_APERTURE))
        return out
    raise ConfigError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")


def synth_recording(scenario, chain=None, calibration=None, intrinsics=None, frames=300, fps=30.0,
                    pose=DEFAULT_POSE, dims=HandDims(), pixel_noise=0.0, seed=0,
                    handedness=Handedness.RIGHT):
    """Generate a recording plus per-frame ground truth.

    ``pixel_noise`` adds Gaussian pixel jitter (std, px) drawn from ``seed``;
    the depth raster is always rendered from the noise-free pixels.
    """
    chain = chain or bundled_chain()
    calibration = calibration or calibration_preset("so_arm101_glasses")
    intrinsics = intrinsics or default_intrinsics()
    if frames < 0:
        raise ConfigError("frame count must be non-negative")
    rng = np.random.default_rng(seed)
    rec = SyntheticRecording(scenario, intrinsics, [], [], [], fps)
    for f, (q, pos, rot, aperture) in enumerate(_poses(scenario, chain, frames, pose)):
        pts = hand_landmarks(pos, rot, aperture, dims)
        pixels, depth = render(pts, calibration, intrinsics)
        if pixel_noise > 0:
            pixels = pixels + rng.normal(0.0, pixel_noise, pixels.shape)
        rec.landmarks.append(LandmarkFrame(f / fps, handedness, pixels, np.ones(21, bool)))
        rec.depths.append(depth)
        rec.ground_truth.append({
            "frame_index": f,
            "q": [float(v) for v in q],
            "target_xyz": [float(v) for v in pos],
            "target_quat": [float(v) for v in matrix_to_quat(rot)],
            "aperture_rad": float(aperture),
            "landmarks_robot": pts.tolist(),
        })
    return rec


def write_synth(out_dir, rec):
    """Write the bundle and ``ground_truth.json``; returns the manifest path."""
    manifest = write_recording(out_dir, rec.intrinsics, rec.landmarks, rec.depths, rec.fps)
    _write_json(Path(out_dir) / "ground_truth.json", {"scenario": rec.scenario, "frames": rec.ground_truth})
    return manifest


def read_ground_truth(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
