"""
Readers and writers for every on-disk format. Layouts are documented in
``docs/formats.md``. All text formats are JSON or JSON lines; floats are
written with ``repr`` precision so a write/read cycle is bit-exact.
"""

import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import AlignmentError, ConfigError, FormatError
from ..geometry import CalibrationTransform, CameraIntrinsics, DepthFrame, calibration_preset
from ..gripper import GripperParams, parse_mode
from ..handmodel import NUM_LANDMARKS, LandmarkFrame
from ..kinematics import IkParams, KinematicChain
from ..pipeline import JointCommand, PipelineConfig, Status

RECORDING_FORMAT = "handretarget-recording/1"
DEPTH_MAGIC = b"D16"


def _read_json(path, what):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{what} file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON in {what}: {exc.msg}", f"{path}:{exc.lineno}") from exc


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# -- intrinsics ---------------------------------------------------------------

def load_intrinsics(path):
    d = _read_json(path, "intrinsics")
    try:
        return CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                                int(d["width"]), int(d["height"]), float(d.get("depth_scale", 1000.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad intrinsics record: {exc!r}", str(path)) from exc


def save_intrinsics(path, k):
    _write_json(path, {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
                       "width": k.width, "height": k.height, "depth_scale": k.depth_scale})


# -- chain ------------------------------------------------------------------------

def load_chain(path):
    return KinematicChain.from_dict(_read_json(path, "chain"))


def save_chain(path, chain):
    _write_json(path, chain.to_dict())


def bundled_chain():
    """Approximate SO-ARM101 preset shipped with the package."""
    text = resources.files("handretarget").joinpath("data/so_arm101.json").read_text(encoding="utf-8")
    return KinematicChain.from_dict(json.loads(text))


# -- landmark stream ---------------------------------------------------------------

def landmark_record(frame):
    return {
        "timestamp_s": float(frame.timestamp),
        "handedness": None if frame.handedness is None else frame.handedness.value,
        "landmarks": [[float(u), float(v), bool(ok)]
                      for (u, v), ok in zip(frame.pixels, frame.pixel_valid)],
    }


def write_landmarks(path, frames):
    with open(path, "w", encoding="utf-8") as fh:
        for f in frames:
            fh.write(json.dumps(landmark_record(f)) + "\n")


def parse_landmark_line(line, where):
    try:
        rec = json.loads(line)
        lms = rec["landmarks"]
        if len(lms) != NUM_LANDMARKS:
            raise FormatError(f"expected {NUM_LANDMARKS} landmarks, got {len(lms)}", where)
        pixels = [(float(u), float(v)) for u, v, _ in lms]
        valid = []
        for _, _, ok in lms:
            if not isinstance(ok, bool):
                raise FormatError("landmark validity must be true/false", where)
            valid.append(ok)
        return LandmarkFrame(float(rec["timestamp_s"]), rec.get("handedness"), pixels, valid)
    except FormatError:
        raise
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", where) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad landmark record: {exc!r}", where) from exc


def read_landmarks(path):
    frames = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                frames.append(parse_landmark_line(line, f"{path}:{lineno}"))
    return frames


# -- depth rasters -------------------------------------------------------------

def write_depth(path, depth):
    """``D16 <width> <height> <scale>\\n`` then row-major little-endian uint16."""
    raster = np.asarray(depth.raster)
    if raster.dtype != np.uint16:
        if raster.min() < 0 or raster.max() > 0xFFFF:
            raise FormatError("depth values do not fit in 16 bits", str(path))
        raster = raster.astype(np.uint16)
    h, w = raster.shape
    header = f"D16 {w} {h} {float(depth.scale)!r}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(raster.astype("<u2").tobytes())


def _read_pgm(data, path, scale):
    # binary P5 with maxval > 255 stores big-endian samples
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header", f"{path}:byte {pos}")
        tokens.append(data[start:pos])
    pos += 1
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError("bad PGM header", f"{path}:byte 0") from exc
    dtype = ">u2" if maxval > 255 else "u1"
    size = np.dtype(dtype).itemsize * w * h
    if len(data) - pos < size:
        raise FormatError(f"PGM payload has {len(data) - pos} bytes, expected {size}", f"{path}:byte {pos}")
    raster = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w).astype(np.uint16)
    return DepthFrame(raster, scale)


def read_depth(path, pgm_scale=1000.0):
    path = Path(path)
    if not path.is_file():
        raise AlignmentError(f"depth frame missing: {path}")
    data = path.read_bytes()
    if data[:2] == b"P5":
        return _read_pgm(data, path, pgm_scale)
    nl = data.find(b"\n")
    if data[:3] != DEPTH_MAGIC or nl < 0:
        raise FormatError("not a D16 or binary PGM depth file", f"{path}:byte 0")
    try:
        _, w, h, scale = data[:nl].decode("ascii").split()
        w, h, scale = int(w), int(h), float(scale)
    except ValueError as exc:
        raise FormatError("bad D16 header", f"{path}:byte 0") from exc
    payload = data[nl + 1:]
    if len(payload) != 2 * w * h:
        raise FormatError(f"payload has {len(payload)} bytes, expected {2 * w * h}", f"{path}:byte {nl + 1}")
    raster = np.frombuffer(payload, dtype="<u2").reshape(h, w).astype(np.uint16)
    return DepthFrame(raster, scale)


# -- recording bundle --------------------------------------------------------------

@dataclass
class RecordingBundle:
    root: Path
    intrinsics: CameraIntrinsics
    landmarks: list
    depth_paths: list
    fps: float

    def __len__(self):
        return len(self.landmarks)

    def depth(self, index):
        d = read_depth(self.depth_paths[index], self.intrinsics.depth_scale)
        d.check_matches(self.intrinsics)
        return d

    def frames(self):
        """Yield ``(LandmarkFrame, loader)`` with depth read only when the loader is called."""
        for i, lm in enumerate(self.landmarks):
            yield lm, (lambda i=i: self.depth(i))

    def __iter__(self):
        for i, lm in enumerate(self.landmarks):
            yield lm, self.depth(i)


def load_recording(manifest_path):
    manifest_path = Path(manifest_path)
    m = _read_json(manifest_path, "manifest")
    root = manifest_path.parent
    try:
        n = int(m["frame_count"])
        fps = float(m["fps"])
        pattern = m["depth_pattern"]
        intr_path = root / m["intrinsics"]
        lm_path = root / m["landmarks"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad manifest: {exc!r}", str(manifest_path)) from exc
    if fps <= 0:
        raise FormatError("fps must be positive", str(manifest_path))
    intrinsics = load_intrinsics(intr_path)
    if not lm_path.is_file():
        raise ConfigError(f"landmark stream not found: {lm_path}")
    landmarks = read_landmarks(lm_path)
    if len(landmarks) != n:
        raise AlignmentError(f"manifest declares {n} frames but {lm_path} has {len(landmarks)} records")
    depth_paths = [root / pattern.format(index=i) for i in range(n)]
    for i, p in enumerate(depth_paths):
        if not p.is_file():
            raise AlignmentError(f"depth frame {i} missing: {p}")
    for i in range(1, n):
        if landmarks[i].timestamp < landmarks[i - 1].timestamp:
            raise FormatError("timestamps are not monotone", f"{lm_path}:{i + 1}")
    return RecordingBundle(root, intrinsics, landmarks, depth_paths, fps)


def write_recording(out_dir, intrinsics, landmarks, depths, fps, depth_pattern="depth/{index:06d}.d16"):
    """Write a complete bundle and return the manifest path."""
    if len(landmarks) != len(depths):
        raise AlignmentError(f"{len(landmarks)} landmark frames but {len(depths)} depth frames")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_intrinsics(out / "intrinsics.json", intrinsics)
    write_landmarks(out / "landmarks.jsonl", landmarks)
    for i, d in enumerate(depths):
        p = out / depth_pattern.format(index=i)
        p.parent.mkdir(parents=True, exist_ok=True)
        write_depth(p, d)
    manifest = out / "manifest.json"
    _write_json(manifest, {
        "format": RECORDING_FORMAT, "intrinsics": "intrinsics.json", "landmarks": "landmarks.jsonl",
        "depth_pattern": depth_pattern, "frame_count": len(landmarks), "fps": float(fps),
    })
    return manifest


# -- trajectory and latency ------------------------------------------------------------

def _floats(a):
    return None if a is None else [float(v) for v in a]


def trajectory_record(index, cmd):
    return {
        "frame_index": index,
        "timestamp_s": float(cmd.timestamp),
        "status": cmd.status.value,
        "reason": cmd.reason,
        "angles_rad": _floats(cmd.angles),
        "normalized": _floats(cmd.normalized),
        "motor": _floats(cmd.motor),
        "gripper_level": cmd.gripper_level,
        "ik_iterations": cmd.ik_iterations,
        "ik_residual": None if cmd.ik_residual is None else float(cmd.ik_residual),
        "ik_converged": cmd.ik_converged,
        "target_xyz": _floats(cmd.target_xyz),
        "target_quat": _floats(cmd.target_quat),
        "orientation_source": cmd.orientation_source,
    }


def write_trajectory(path, trajectory):
    with open(path, "w", encoding="utf-8") as fh:
        for i, cmd in enumerate(trajectory):
            fh.write(json.dumps(trajectory_record(i, cmd)) + "\n")


def _array(v):
    return None if v is None else np.asarray(v, dtype=float)


def read_trajectory(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"trajectory file not found: {path}")
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                r = json.loads(line)
                cmd = JointCommand(
                    timestamp=float(r["timestamp_s"]), status=Status(r["status"]),
                    angles=_array(r.get("angles_rad")), normalized=_array(r.get("normalized")),
                    motor=_array(r.get("motor")), reason=r.get("reason"),
                    gripper_level=r.get("gripper_level"), ik_iterations=r.get("ik_iterations"),
                    ik_residual=r.get("ik_residual"), ik_converged=r.get("ik_converged"),
                    target_xyz=_array(r.get("target_xyz")), target_quat=_array(r.get("target_quat")),
                    orientation_source=r.get("orientation_source"))
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", where) from exc
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad trajectory record: {exc!r}", where) from exc
            if cmd.status is not Status.REJECTED and cmd.angles is None:
                raise FormatError(f"{cmd.status.value} record without angles", where)
            out.append(cmd)
    return out


def write_latency(path, summary):
    _write_json(path, summary)


# -- pipeline config -------------------------------------------------------------

CONFIG_KEYS = {"chain", "intrinsics", "calibration_preset", "calibration", "alpha_2d", "alpha_joints",
               "ik", "gripper_mode", "handedness", "z_floor"}


def calibration_from_dict(d):
    try:
        r_urdf = np.asarray(d.get("R_urdf", np.eye(3)), dtype=float)
        t_urdf = np.asarray(d.get("t_urdf", np.zeros(3)), dtype=float)
        t_cam = np.asarray(d["t_cam"], dtype=float)
        if "theta_mount_deg" in d or "theta_mount" in d:
            theta = (np.deg2rad(float(d["theta_mount_deg"])) if "theta_mount_deg" in d
                     else float(d["theta_mount"]))
            if "R_cam" in d:
                raise ConfigError("give either R_cam or a mount angle, not both")
            return CalibrationTransform.from_mount_angle(theta, t_cam, r_urdf, t_urdf)
        return CalibrationTransform(np.asarray(d["R_cam"], dtype=float), t_cam, r_urdf, t_urdf)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad calibration: {exc!r}") from exc


def resolve_config(d, base_dir=Path(".")):
    """Build a PipelineConfig from a plain mapping (file contents merged with overrides)."""
    unknown = set(d) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if d.get("calibration_preset") is not None and d.get("calibration") is not None:
        raise ConfigError("calibration_preset and calibration are mutually exclusive")

    def rel(p):
        p = Path(p)
        return p if p.is_absolute() else Path(base_dir) / p

    chain = load_chain(rel(d["chain"])) if d.get("chain") else bundled_chain()
    intrinsics = load_intrinsics(rel(d["intrinsics"])) if d.get("intrinsics") else None
    cal = d.get("calibration")
    if isinstance(cal, (str, os.PathLike)):
        cal = _read_json(rel(cal), "calibration")
    calibration = (calibration_from_dict(cal) if cal is not None
                   else calibration_preset(d.get("calibration_preset") or "so_arm101_glasses"))
    try:
        ik = IkParams(**(d.get("ik") or {}))
    except TypeError as exc:
        raise ConfigError(f"bad ik section: {exc}") from exc
    mode, offset = parse_mode(d.get("gripper_mode") or "binary")
    kwargs = {k: d[k] for k in ("alpha_2d", "alpha_joints", "handedness", "z_floor") if d.get(k) is not None}
    try:
        return PipelineConfig(chain=chain, intrinsics=intrinsics, calibration=calibration, ik=ik,
                              gripper=GripperParams(mode=mode, mode_offset=offset), **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_pipeline_config(path=None, overrides=None):
    """Defaults < config file < ``overrides`` (keys with value None are ignored)."""
    d = {}
    base = Path(".")
    if path is not None:
        d = _read_json(path, "config")
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a JSON object")
        base = Path(path).parent
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k == "ik":
            d["ik"] = {**(d.get("ik") or {}), **v}
        else:
            d[k] = v
        if k == "calibration_preset":
            d.pop("calibration", None)
        elif k == "calibration":
            d.pop("calibration_preset", None)
    return resolve_config(d, base)
