"""File formats, synthetic recordings and kinematic replay validation."""

from .formats import (
    RecordingBundle,
    bundled_chain,
    load_chain,
    load_intrinsics,
    load_pipeline_config,
    load_recording,
    read_depth,
    read_landmarks,
    read_trajectory,
    save_chain,
    save_intrinsics,
    write_depth,
    write_landmarks,
    write_latency,
    write_recording,
    write_trajectory,
)
from .replay import ReplayLimits, fk_replay_validate
from .synth import SCENARIOS, SyntheticRecording, read_ground_truth, synth_recording, write_synth

__all__ = [
    "RecordingBundle", "ReplayLimits", "SCENARIOS", "SyntheticRecording",
    "bundled_chain", "fk_replay_validate", "load_chain", "load_intrinsics",
    "load_pipeline_config", "load_recording", "read_depth", "read_ground_truth", "read_landmarks",
    "read_trajectory", "save_chain", "save_intrinsics", "synth_recording",
    "write_depth", "write_landmarks", "write_latency", "write_recording",
    "write_synth", "write_trajectory",
]
