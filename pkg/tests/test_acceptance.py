"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Lines are collected in ``conftest.ACCEPTANCE_LINES`` and printed in the
terminal summary. Absolute latencies are reported, never asserted.
"""

import itertools
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from conftest import ACCEPTANCE_LINES
from oracles import fd_jacobian, rotation_error
from handretarget.errors import DegenerateGeometry
from handretarget.geometry import (
    CameraIntrinsics, DepthFrame, Frame, HandPoints3D, Point3, build_camera_rotation, calibration_preset,
    camera_to_robot, deproject, deproject_hand, project,
)
from handretarget.gripper import (
    PHI_MAX, PHI_MIN, GripperParams, GripperState, apply_gripper_mode, gripper_angle, gripper_with_fallback,
)
from handretarget.handmodel import Handedness, LandmarkId as L
from handretarget.kinematics import forward_kinematics, jacobian, solve_ik
from handretarget.pipeline import (
    STAGE_ORDER, JointCommand, PipelineConfig, Status, latency_report, normalize_and_map, process_stream,
)
from handretarget.retarget import TargetPose, target_frame, target_position
from handretarget.io import fk_replay_validate, synth_recording


def report(n, title, ok, detail):
    line = f"AC{n:<2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def static300(chain):
    rec = synth_recording("static_grasp", chain, frames=300)
    cfg = PipelineConfig(chain, intrinsics=rec.intrinsics)
    t0 = time.perf_counter()
    traj, reports = process_stream(rec.frames(), cfg)
    return rec, cfg, traj, reports, time.perf_counter() - t0


def test_ac1_geometry_round_trip():
    rng = np.random.default_rng(1)
    k = CameraIntrinsics(610.0, 612.0, 319.5, 239.5, 640, 480)
    n = 10_000
    # in-frustum: draw the pixel and depth, then lift to a camera point
    z = rng.uniform(0.1, 5.0, n)
    u = rng.uniform(-0.5, k.width - 0.5, n)
    v = rng.uniform(-0.5, k.height - 0.5, n)
    pts = np.column_stack([(u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z])
    raster = np.zeros((k.height, k.width))
    t0 = time.perf_counter()
    worst = 0.0
    for p in pts:
        pu, pv = project(Point3(p, Frame.CAMERA), k)
        r, c = int(np.floor(pv + 0.5)), int(np.floor(pu + 0.5))
        raster[r, c] = p[2]  # metric raster (scale 1) so the depth reading is exact
        q = deproject(pu, pv, DepthFrame(raster, scale=1.0), k)
        raster[r, c] = 0.0
        worst = max(worst, float(np.max(np.abs(q.xyz - p))))
    dt = time.perf_counter() - t0
    report(1, "deproject(project(p)) identity", worst < 1e-9 and dt < 1.0,
           f"max_err={worst:.2e} m over {n} points, runtime={dt:.2f} s")


def test_ac2_camera_rotation():
    s, c = 0.766044443118978, 0.642787609686539  # sin 50deg, cos 50deg
    expected = np.array([[-1, 0, 0], [0, s, -c], [0, -c, -s]])
    r = build_camera_rotation(np.deg2rad(50.0))
    entry_err = float(np.max(np.abs(r - expected)))
    cal = calibration_preset("so_arm101_glasses")
    ortho = float(np.max(np.abs(cal.r_final.T @ cal.r_final - np.eye(3))))
    preset_ok = np.allclose(cal.t_cam, (0.04, -0.049, 0.48)) and np.isclose(cal.theta_mount, np.deg2rad(50))
    report(2, "camera mount rotation", entry_err < 1e-5 and ortho < 1e-9 and preset_ok,
           f"entry_err={entry_err:.1e}, |R^T R - I|={ortho:.1e}, det={np.linalg.det(r):+.12f}")


def test_ac3_jacobian(chain):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        q = rng.uniform(chain.lower, chain.upper)
        worst = max(worst, float(np.max(np.abs(jacobian(chain, q) - fd_jacobian(chain, q, 1e-6)))))
    dt = time.perf_counter() - t0
    report(3, "Jacobian vs central differences", worst < 1e-5 and dt < 5.0,
           f"max_entry_err={worst:.2e} over 100 configs, runtime={dt:.2f} s")


def test_ac4_ik_round_trip(chain):
    rng = np.random.default_rng(4)
    act = chain.active
    n, ok, in_limits, max_iter = 1000, 0, True, 0
    t0 = time.perf_counter()
    for _ in range(n):
        q_true = rng.uniform(chain.lower, chain.upper)
        pose = forward_kinematics(chain, q_true)
        rest = q_true.copy()
        rest[act] += rng.uniform(-0.1, 0.1, act.sum())
        rest = chain.clamp(rest)
        res = solve_ik(chain, TargetPose(Point3(pose.position, Frame.ROBOT), pose.quaternion), rest)
        got = forward_kinematics(chain, res.q)
        max_iter = max(max_iter, res.iterations)
        in_limits &= bool(chain.within_limits(res.q))
        if (np.linalg.norm(got.position - pose.position) < 1e-3
                and rotation_error(got.rotation, pose.rotation) < 1e-2):
            ok += 1
    dt = time.perf_counter() - t0
    rate = ok / n
    report(4, "IK round-trip", rate >= 0.95 and in_limits and max_iter <= 100 and dt < 30.0,
           f"solved={ok}/{n} ({rate:.1%}), all_in_limits={in_limits}, max_iterations={max_iter}, "
           f"runtime={dt:.2f} s")


def _random_hand(rng):
    xyz = rng.normal(0.0, 0.05, (21, 3)) + rng.uniform(-0.3, 0.3, 3)
    return HandPoints3D(xyz, np.ones(21, bool), Frame.ROBOT)


def _well_conditioned(h):
    e1 = h.xyz[L.INDEX_FINGER_MCP] - h.xyz[L.THUMB_MCP]
    d = 0.5 * (h.xyz[L.THUMB_TIP] - h.xyz[L.THUMB_MCP] + h.xyz[L.INDEX_FINGER_TIP] - h.xyz[L.INDEX_FINGER_MCP])
    n1, nd = np.linalg.norm(e1), np.linalg.norm(d)
    return n1 > 1e-3 and nd > 1e-3 and np.linalg.norm(np.cross(e1 / n1, d / nd)) > 1e-2


def test_ac5_target_frame():
    rng = np.random.default_rng(5)
    n = 10_000
    worst_ortho, worst_det, worst_trans, worst_equiv, tested = 0.0, 0.0, 0.0, 0.0, 0
    while tested < n:
        h = _random_hand(rng)
        if not _well_conditioned(h):
            continue
        tested += 1
        r, _ = target_frame(h)
        p = target_position(h).xyz
        worst_ortho = max(worst_ortho, float(np.linalg.norm(r.T @ r - np.eye(3))))
        worst_det = max(worst_det, abs(np.linalg.det(r) - 1.0))

        t = rng.uniform(-1, 1, 3)
        shifted = HandPoints3D(h.xyz + t, h.valid, Frame.ROBOT)
        r_t, _ = target_frame(shifted)
        worst_trans = max(worst_trans, float(np.max(np.abs(r_t - r))),
                          float(np.max(np.abs(target_position(shifted).xyz - (p + t)))))

        q = Rotation.random(random_state=rng).as_matrix()
        turned = HandPoints3D(h.xyz @ q.T, h.valid, Frame.ROBOT)
        r_q, _ = target_frame(turned)
        worst_equiv = max(worst_equiv, float(np.max(np.abs(r_q - q @ r))),
                          float(np.max(np.abs(target_position(turned).xyz - q @ p))))
    ok = worst_ortho < 1e-9 and worst_det < 1e-9 and worst_trans < 1e-9 and worst_equiv < 1e-9
    report(5, "target frame construction", ok,
           f"{n} hands, |R^T R - I|<={worst_ortho:.1e}, |det-1|<={worst_det:.1e}, "
           f"translation={worst_trans:.1e}, rotation={worst_equiv:.1e}")


FALLBACK_IDS = (L.THUMB_TIP, L.INDEX_FINGER_TIP, L.THUMB_IP, L.INDEX_FINGER_DIP)


def _expected_level(present, history):
    tips = present[0] and present[1]
    knuckles = present[2] and present[3]
    return 1 if tips else 2 if knuckles else 3 if history else 4


def test_ac6_gripper_contract():
    rng = np.random.default_rng(6)
    params = GripperParams()
    target = np.zeros(3)
    xyz = np.zeros((21, 3))
    xyz[L.THUMB_TIP], xyz[L.INDEX_FINGER_TIP] = (1, 0, 0), (0.3, 1, 0)
    xyz[L.THUMB_IP], xyz[L.INDEX_FINGER_DIP] = (1, 0.2, 0), (0.5, 1, 0)
    mismatches = []
    rows = 0
    for present in itertools.product([False, True], repeat=4):
        for history in (False, True):
            valid = np.zeros(21, bool)
            for ok, i in zip(present, FALLBACK_IDS):
                valid[i] = ok
            state = GripperState(last_valid_angle=0.5 if history else None)
            phi, level = gripper_with_fallback(HandPoints3D(xyz, valid, Frame.ROBOT), target, state, params)
            want = _expected_level(present, history)
            value = {1: gripper_angle(xyz[L.THUMB_TIP], xyz[L.INDEX_FINGER_TIP], target),
                     2: gripper_angle(xyz[L.THUMB_IP], xyz[L.INDEX_FINGER_DIP], target),
                     3: 0.5, 4: 0.8725}[want]
            rows += 1
            if level != want or abs(phi - value) > 1e-12:
                mismatches.append((present, history, level, phi))

    out_of_range = 0
    binary_vals = set()
    for _ in range(10_000):
        a, b, t = rng.normal(size=(3, 3))
        try:
            phi = gripper_angle(a, b, t)
        except Exception:
            continue
        out_of_range += not PHI_MIN <= phi <= PHI_MAX
        binary_vals.add(apply_gripper_mode(phi, GripperParams(mode="binary")))
    binary = GripperParams(mode="binary")
    threshold_ok = (apply_gripper_mode(np.deg2rad(60), binary) == PHI_MAX
                    and apply_gripper_mode(np.nextafter(np.deg2rad(60), 0), binary) == PHI_MIN)
    ok = not mismatches and rows == 32 and out_of_range == 0 and binary_vals == {PHI_MIN, PHI_MAX} and threshold_ok
    report(6, "gripper contract", ok,
           f"truth table {rows - len(mismatches)}/{rows} rows, out_of_range={out_of_range}/10000, "
           f"binary_outputs={sorted(binary_vals)}, 60deg threshold={'ok' if threshold_ok else 'wrong'}")


SETTLE_FRAMES = 15


def test_ac7_end_to_end(chain, static300):
    rec, cfg, traj, _, dt = static300
    post = traj[SETTLE_FRAMES:]
    all_solved = all(c.status is Status.SOLVED for c in post)
    fk_err = max(float(np.linalg.norm(forward_kinematics(chain, c.angles).position - g["target_xyz"]))
                 for c, g in zip(traj[SETTLE_FRAMES:], rec.ground_truth[SETTLE_FRAMES:]))
    target_err = max(float(np.linalg.norm(c.target_xyz - g["target_xyz"]))
                     for c, g in zip(post, rec.ground_truth[SETTLE_FRAMES:]))
    lm_err = 0.0
    for (lm, depth), g in zip(rec.frames(), rec.ground_truth):
        pts = camera_to_robot(deproject_hand(lm, depth, rec.intrinsics), cfg.calibration)
        lm_err = max(lm_err, float(np.max(np.linalg.norm(pts.xyz[pts.valid] - np.asarray(g["landmarks_robot"])[pts.valid],
                                                         axis=1))))
    again, _ = process_stream(rec.frames(), cfg)
    deterministic = all(a.status == b.status and np.array_equal(a.angles, b.angles) and np.array_equal(a.motor, b.motor)
                        for a, b in zip(traj, again))
    recon = max(target_err, lm_err)
    ok = len(traj) == 300 and all_solved and fk_err < 5e-3 and deterministic and recon < 1e-3 and dt < 60.0
    report(7, "end-to-end static_grasp", ok,
           f"solved={sum(c.status is Status.SOLVED for c in traj)}/300 (settle {SETTLE_FRAMES}), "
           f"fk_err={fk_err * 1e3:.2f} mm, reconstruction_err={recon * 1e3:.3f} mm, "
           f"deterministic={deterministic}, runtime={dt:.2f} s")


def test_ac8_motor_mapping(chain):
    lo, hi = chain.lower, chain.upper
    _, mid = normalize_and_map(0.5 * (lo + hi), lo, hi)
    _, at_lo = normalize_and_map(lo, lo, hi)
    _, at_hi = normalize_and_map(hi, lo, hi)
    pan = tuple(float(normalize_and_map(np.r_[a, chain.mid_range[1:]], lo, hi)[0][0]) for a in (-1.920, 1.920))
    ok = (np.all(mid[:-1] == 0.0) and np.all(at_lo[:-1] == -100.0) and np.all(at_hi[:-1] == 100.0)
          and at_lo[-1] == 0.0 and at_hi[-1] == 100.0 and pan == (0.0, 1.0)
          and (lo[0], hi[0]) == (-1.920, 1.920))
    report(8, "motor mapping", ok,
           f"mid->arm {mid[:-1].tolist()}, limits->arm {{{at_lo[0]:g},{at_hi[0]:g}}} gripper "
           f"{{{at_lo[-1]:g},{at_hi[-1]:g}}}, shoulder_pan +-1.920 -> {pan}")


def test_ac9_replay(chain, static300):
    _, _, traj, _, _ = static300
    clean = fk_replay_validate(traj, chain)
    rng = np.random.default_rng(9)
    f_limit, f_floor, f_spike = sorted(rng.choice(np.arange(20, 280, 10), 3, replace=False))
    seeded = list(traj)

    def put(i, q):
        seeded[i] = JointCommand(timestamp=traj[i].timestamp, status=Status.SOLVED, angles=np.asarray(q, float))

    q_limit = traj[f_limit].angles.copy()
    q_limit[4] = 3.0  # wrist_roll limit is 2.793
    put(f_limit, q_limit)
    put(f_floor, [0.0, 0.5, 0.6, 0.8, 0.0, traj[f_floor].angles[-1]])  # EE at z = -0.067 m
    q_spike = traj[f_spike].angles.copy()
    q_spike[0] += 0.5  # 15 rad/s at 30 fps
    put(f_spike, q_spike)

    rep = fk_replay_validate(seeded, chain)
    hits = {(f["frame"], f["kind"]) for f in rep["flags"]}
    found = {"joint_limit": (f_limit, "joint_limit") in hits, "z_floor": (f_floor, "z_floor") in hits,
             "velocity": (f_spike, "velocity") in hits}
    # a one-frame fault shows up in velocity at i, i+1 and in acceleration up to i+2
    touched = {f + d for f in (f_limit, f_floor, f_spike) for d in range(3)}
    stray = [f for f in rep["flags"] if f["frame"] not in touched]
    ok = clean["ok"] and not clean["flags"] and all(found.values()) and not stray
    report(9, "FK replay validation", ok,
           f"clean flags={len(clean['flags'])}, seeded frames limit={f_limit} z={f_floor} spike={f_spike} "
           f"found={found}, stray={len(stray)}")


def test_ac10_latency(chain, static300):
    rec, cfg, _, reports, _ = static300
    streams = {"static_grasp": (reports, 300, 300)}
    gc = synth_recording("grasp_cycle", chain, frames=60)
    frames = gc.frames()
    for i in (10, 11):
        lm, d = frames[i]
        frames[i] = (replace(lm, handedness=Handedness.LEFT), d)
    lm, d = frames[20]
    frames[20] = (replace(lm, pixel_valid=np.arange(21) < 8), d)
    traj, rep = process_stream(frames, PipelineConfig(chain, intrinsics=gc.intrinsics))
    streams["grasp_cycle+dropouts"] = (rep, 60, sum(c.status is Status.SOLVED for c in traj))
    empty_traj, empty_rep = process_stream([], cfg)
    streams["empty"] = (empty_rep, 0, 0)

    problems, details = [], []
    for name, (reps, n, solved) in streams.items():
        counts = [r.count for r in reps]
        if [r.name for r in reps] != list(STAGE_ORDER):
            problems.append(f"{name}: stage order")
        if counts[0] != n or counts[1] != n or counts[-1] < solved or counts != sorted(counts, reverse=True):
            problems.append(f"{name}: counts {counts}")
        summary, _ = latency_report(reps)
        total = sum(r.total_us for r in reps)
        additive = abs(summary["total_mean_us"] * max(n, 1) - total) <= 1e-9 * max(total, 1.0)
        if not additive:
            problems.append(f"{name}: total not additive")
        details.append(f"{name} counts={counts} total_mean={summary['total_mean_us']:.0f}us")
    report(10, "latency instrumentation", not problems, "; ".join(problems or details))
