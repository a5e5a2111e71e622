"""
Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 usage/config/format error.
Settings resolve as built-in defaults < ``--config`` file < flags.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .errors import RetargetError
from .io import (
    ReplayLimits, SCENARIOS, bundled_chain, fk_replay_validate, load_chain, load_pipeline_config,
    load_recording, read_trajectory, synth_recording, write_latency, write_synth, write_trajectory,
)
from .io.formats import load_intrinsics
from .kinematics import IkParams, forward_kinematics, solve_ik
from .pipeline import Status, latency_report, process_stream
from .retarget import TargetPose
from .geometry import Frame, Point3
from .rotations import rotation_angle_between

log = logging.getLogger("handretarget")


def _abs(p):
    return None if p is None else str(Path(p).resolve())


def _add_pipeline_flags(p):
    p.add_argument("--config", help="JSON pipeline config file")
    p.add_argument("--chain", help="chain config (default: bundled SO-ARM101 preset)")
    p.add_argument("--intrinsics", help="intrinsics file overriding the recording's")
    cal = p.add_mutually_exclusive_group()
    cal.add_argument("--calibration-preset", help="named calibration preset (default so_arm101_glasses)")
    cal.add_argument("--calibration", help="JSON file with R_cam/t_cam (or theta_mount_deg) and optional R_urdf/t_urdf")
    p.add_argument("--alpha-2d", type=float, help="landmark EMA factor (default 0.8)")
    p.add_argument("--alpha-joints", type=float, help="joint EMA factor (default 0.5)")
    p.add_argument("--gripper-mode", help="normal | binary | offset:<rad> (default binary)")
    p.add_argument("--handedness", choices=["Left", "Right"])
    p.add_argument("--z-floor", type=float, help="minimum target height in metres (default 0.05)")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--residual-threshold", type=float)


def _overrides(args):
    ik = {k: v for k, v in (("max_iterations", args.max_iterations),
                            ("residual_threshold", args.residual_threshold)) if v is not None}
    return {
        "chain": _abs(args.chain), "intrinsics": _abs(args.intrinsics),
        "calibration_preset": args.calibration_preset, "calibration": _abs(args.calibration),
        "alpha_2d": args.alpha_2d, "alpha_joints": args.alpha_joints, "gripper_mode": args.gripper_mode,
        "handedness": args.handedness, "z_floor": args.z_floor, "ik": ik or None,
    }


def cmd_process(args):
    config = load_pipeline_config(args.config, _overrides(args))
    bundle = load_recording(args.manifest)
    intrinsics = config.intrinsics or bundle.intrinsics
    trajectory, reports = process_stream(bundle.frames(), config, intrinsics)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(out / "trajectory.jsonl", trajectory)
    summary, table = latency_report(reports)
    write_latency(out / "latency.json", summary)
    log.info("\n%s", table)

    counts = {s: sum(c.status is s for c in trajectory) for s in Status}
    iters = [c.ik_iterations for c in trajectory if c.status is Status.SOLVED]
    print(f"frames={len(trajectory)} solved={counts[Status.SOLVED]} held={counts[Status.HELD]} "
          f"rejected={counts[Status.REJECTED]} mean_ik_iterations={np.mean(iters) if iters else 0.0:.2f}")
    return 0


def cmd_fk_replay(args):
    chain = load_chain(args.chain) if args.chain else bundled_chain()
    trajectory = read_trajectory(args.trajectory)
    kw = {k: v for k, v in (("arm_velocity", args.max_velocity_arm), ("gripper_velocity", args.max_velocity_gripper),
                            ("arm_acceleration", args.max_acceleration_arm),
                            ("gripper_acceleration", args.max_acceleration_gripper)) if v is not None}
    report = fk_replay_validate(trajectory, chain, ReplayLimits.for_chain(chain, **kw), args.fps, args.z_floor)
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    for f in report["flags"]:
        joint = f" joint={f['joint']}" if f["joint"] else ""
        print(f"FLAG frame={f['frame']} kind={f['kind']}{joint} value={f['value']:.6g} limit={f['limit']}")
    print(f"frames={report['frames']} commanded={report['commanded_frames']} flags={len(report['flags'])} "
          f"{'OK' if report['ok'] else 'FAILED'}")
    return 0 if report["ok"] else 1


def cmd_synth(args):
    chain = load_chain(args.chain) if args.chain else bundled_chain()
    config = load_pipeline_config(None, {"calibration_preset": args.calibration_preset,
                                         "calibration": _abs(args.calibration)})
    intrinsics = load_intrinsics(args.intrinsics) if args.intrinsics else None
    rec = synth_recording(args.scenario, chain, config.calibration, intrinsics, args.frames, args.fps,
                          pixel_noise=args.pixel_noise, seed=args.seed)
    manifest = write_synth(args.out, rec)
    print(f"wrote {len(rec.landmarks)} frames to {manifest}")
    return 0


def bench(chain, n, seed, params=IkParams(), noise=0.1):
    """Solve ``n`` FK-generated targets starting near their generating pose."""
    rng = np.random.default_rng(seed)
    times, iters, ok = [], [], 0
    act = chain.active
    for _ in range(n):
        q_true = rng.uniform(chain.lower, chain.upper)
        pose = forward_kinematics(chain, q_true)
        target = TargetPose(Point3(pose.position, Frame.ROBOT), pose.quaternion)
        rest = q_true.copy()
        rest[act] += rng.uniform(-noise, noise, act.sum())
        rest = chain.clamp(rest)
        t0 = time.perf_counter()
        res = solve_ik(chain, target, rest, params)
        times.append((time.perf_counter() - t0) * 1e6)
        got = forward_kinematics(chain, res.q)
        iters.append(res.iterations)
        if (np.linalg.norm(got.position - pose.position) < 1e-3
                and rotation_angle_between(got.rotation, pose.rotation) < 1e-2):
            ok += 1
    if n == 0:
        return {"n": 0, "convergence_rate": None, "time_us": {}, "iterations": {}}
    t, it = np.asarray(times), np.asarray(iters)
    return {
        "n": n, "seed": seed, "convergence_rate": ok / n,
        "time_us": {"mean": float(t.mean()), "p50": float(np.percentile(t, 50)), "p95": float(np.percentile(t, 95))},
        "iterations": {"mean": float(it.mean()), "p50": float(np.percentile(it, 50)), "max": int(it.max())},
    }


def cmd_bench(args):
    chain = load_chain(args.chain) if args.chain else bundled_chain()
    stats = bench(chain, args.n, args.seed)
    if args.json:
        print(json.dumps(stats))
    elif stats["n"] == 0:
        print("n=0 (no solves)")
    else:
        t, it = stats["time_us"], stats["iterations"]
        print(f"n={stats['n']} convergence={stats['convergence_rate']:.3f} "
              f"time_us mean={t['mean']:.1f} p50={t['p50']:.1f} p95={t['p95']:.1f} "
              f"iterations mean={it['mean']:.2f} max={it['max']}")
    return 0


def cmd_validate_config(args):
    config = load_pipeline_config(args.config, _overrides(args))
    print(f"ok: chain={config.chain.name} joints={len(config.chain)} gripper_mode={config.gripper.mode.value} "
          f"handedness={config.handedness.value}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="handretarget", description=__doc__.splitlines()[1])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process", help="retarget a recording into a joint trajectory")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="output directory")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("fk-replay", help="validate a trajectory by forward-kinematic replay")
    p.add_argument("trajectory")
    p.add_argument("--chain")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--z-floor", type=float, default=0.05)
    p.add_argument("--max-velocity-arm", type=float)
    p.add_argument("--max-velocity-gripper", type=float)
    p.add_argument("--max-acceleration-arm", type=float)
    p.add_argument("--max-acceleration-gripper", type=float)
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_fk_replay)

    p = sub.add_parser("synth", help="generate a synthetic recording with ground truth")
    p.add_argument("--scenario", choices=SCENARIOS, default="static_grasp")
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--out", required=True)
    p.add_argument("--chain")
    p.add_argument("--intrinsics")
    cal = p.add_mutually_exclusive_group()
    cal.add_argument("--calibration-preset")
    cal.add_argument("--calibration")
    p.add_argument("--pixel-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time random reachable IK solves")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chain")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate-config", help="load and check a pipeline config")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(message)s")
    try:
        return args.func(args)
    except (RetargetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
