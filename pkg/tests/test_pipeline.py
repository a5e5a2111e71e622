from dataclasses import replace

import numpy as np
import pytest

from handretarget.errors import ConfigError, FormatError, NonFinite
from handretarget.geometry import DepthFrame
from handretarget.handmodel import Handedness, LandmarkFrame
from handretarget.kinematics import forward_kinematics
from handretarget.pipeline import (
    STAGE_ORDER, Pipeline, PipelineConfig, StageReport, Status, latency_report, normalize_and_map, process_stream,
)
from handretarget.io.synth import synth_recording


class FakeClock:
    """Advances one microsecond per call."""

    def __init__(self):
        self.t = 0.0

    def __call__(self):
        self.t += 1e-6
        return self.t


@pytest.fixture(scope="module")
def static_rec(chain):
    return synth_recording("static_grasp", chain, frames=30)


@pytest.fixture
def config(chain, static_rec):
    return PipelineConfig(chain, intrinsics=static_rec.intrinsics)


def test_empty_stream(config):
    traj, reports = process_stream([], config)
    assert traj == []
    assert [r.name for r in reports] == list(STAGE_ORDER)
    summary, _ = latency_report(reports)
    assert summary["frames"] == 0 and summary["total_mean_us"] == 0.0


def test_static_grasp_solves(config, static_rec):
    traj, _ = process_stream(static_rec.frames(), config)
    assert len(traj) == 30
    assert all(c.status is Status.SOLVED for c in traj)
    gt = static_rec.ground_truth[0]
    for c in traj:
        pos = forward_kinematics(config.chain, c.angles).position
        assert np.linalg.norm(pos - gt["target_xyz"]) < 5e-3
        assert np.all(c.motor[:-1] >= -100) and np.all(c.motor[:-1] <= 100)
        assert 0 <= c.motor[-1] <= 100
        assert config.chain.within_limits(c.angles)


def test_sparse_frame_holds_last(config, static_rec):
    frames = static_rec.frames()[:3]
    lm, depth = frames[1]
    valid = np.zeros(21, bool)
    valid[:10] = True
    frames[1] = (replace(lm, pixel_valid=valid), depth)
    traj, _ = process_stream(frames, config)
    assert [c.status for c in traj] == [Status.SOLVED, Status.HELD, Status.SOLVED]
    np.testing.assert_array_equal(traj[1].angles, traj[0].angles)
    assert traj[1].reason == "insufficient_depth"


def test_first_frame_failure_rejected(config, static_rec):
    lm, depth = static_rec.frames()[0]
    blank = DepthFrame(np.zeros_like(depth.raster), depth.scale)
    traj, _ = process_stream([(lm, blank)], config)
    assert traj[0].status is Status.REJECTED and traj[0].angles is None


def test_wrong_hand_is_held(config, static_rec):
    frames = static_rec.frames()[:2]
    lm, depth = frames[1]
    frames[1] = (replace(lm, handedness=Handedness.LEFT), depth)
    traj, _ = process_stream(frames, config)
    assert traj[1].status is Status.HELD and traj[1].reason == "no_hand"
    lm0, d0 = frames[0]
    traj, _ = process_stream([(replace(lm0, handedness=None), d0)], config)
    assert traj[0].status is Status.REJECTED


def test_decreasing_timestamp(config, static_rec):
    pipe = Pipeline(config)
    (a, da), (b, db) = static_rec.frames()[:2]
    pipe.step(b, db)
    with pytest.raises(FormatError):
        pipe.step(a, da)


def test_deterministic(config, static_rec):
    t1, _ = process_stream(static_rec.frames(), config)
    t2, _ = process_stream(static_rec.frames(), config)
    for a, b in zip(t1, t2):
        np.testing.assert_array_equal(a.angles, b.angles)
        np.testing.assert_array_equal(a.motor, b.motor)


def test_config_validation(chain):
    with pytest.raises(ConfigError):
        PipelineConfig(chain, alpha_2d=0.0)
    with pytest.raises(ConfigError):
        Pipeline(PipelineConfig(chain))


def test_normalize_and_map():
    lower, upper = np.array([-1.0, -1.0, 0.0]), np.array([1.0, 1.0, 2.0])
    norm, motor = normalize_and_map([0.0, 1.0, 1.0], lower, upper)
    np.testing.assert_allclose(norm, (0.5, 1.0, 0.5))
    np.testing.assert_allclose(motor, (0.0, 100.0, 50.0))
    norm, motor = normalize_and_map([-5.0, 5.0, 3.0], lower, upper)
    np.testing.assert_allclose(motor, (-100.0, 100.0, 100.0))
    with pytest.raises(NonFinite):
        normalize_and_map([np.nan, 0.0, 0.0], lower, upper)


def test_latency_with_fake_clock(config, static_rec):
    frames = static_rec.frames()[:5]
    lm, depth = frames[2]
    frames[2] = (replace(lm, handedness=Handedness.LEFT), depth)
    _, reports = process_stream(frames, config, clock=FakeClock())
    assert [r.name for r in reports] == list(STAGE_ORDER)
    counts = [r.count for r in reports]
    assert counts == [5, 5, 4, 4, 4]
    summary, table = latency_report(reports)
    assert summary["frames"] == 5
    assert summary["total_mean_us"] == pytest.approx(sum(r.total_us for r in reports) / 5)
    assert [row["stage"] for row in summary["stages"]] == list(STAGE_ORDER)
    for row in summary["stages"]:
        assert row["mean_us"] == pytest.approx(1.0)
    assert "total per frame" in table


def test_latency_report_sorts_stages():
    reports = [StageReport("ik_gripper", [2.0]), StageReport("camera_input", [1.0, 3.0])]
    summary, _ = latency_report(reports)
    assert [r["stage"] for r in summary["stages"]] == ["camera_input", "ik_gripper"]
    assert summary["total_mean_us"] == pytest.approx(3.0)
    assert summary["stages"][0]["p50_us"] == 2.0
