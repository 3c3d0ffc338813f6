import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qposture.geometry import vertex_angles
from qposture.skeleton import JOINTS, parse_pose_sequence, serialize_pose_sequence
from qposture.synth import (
    ANGLE_CHANNELS,
    PRESETS,
    InfeasibleMotionError,
    MotionSpec,
    Trajectory,
    generate_motion,
    load_motion_spec,
    perturbed,
    preset,
    spec_from_mapping,
    with_yaw,
)

PI = math.pi

_TRIPLES = {
    "elbow": ("shoulder", "elbow", "wrist"),
    "armpit": ("elbow", "shoulder", "hip"),
    "hip": ("shoulder", "hip", "knee"),
    "knee": ("hip", "knee", "ankle"),
}


def measured(seq, channel):
    side, dof = channel.split()
    a, b, c = (f"{side} {p}" for p in _TRIPLES[dof])
    j = seq.joint_arrays([a, b, c])
    return vertex_angles(j[a], j[b], j[c])[0]


def test_constant_spec_frames_identical():
    seq = generate_motion(MotionSpec({"left elbow": Trajectory.constant(1.2)}, duration=0.5))
    first = seq[0]
    for f in seq:
        for n in JOINTS:
            np.testing.assert_array_equal(f[n], first[n])


def test_knee_sinusoid_closed_loop():
    spec = MotionSpec({"left knee": Trajectory.sinusoid(2.0, 0.6, 2.0)}, duration=4.0)
    seq = generate_motion(spec)
    t = seq.timestamps
    np.testing.assert_allclose(measured(seq, "left knee"), 2.0 + 0.6 * np.sin(2 * PI * t / 2.0), atol=1e-6)


@pytest.mark.parametrize("name", [p for p in PRESETS if p != "stand"])
def test_presets_closed_loop(name):
    spec = preset(name)
    seq = generate_motion(spec)
    t = seq.timestamps
    for ch in ANGLE_CHANNELS:
        np.testing.assert_allclose(measured(seq, ch), spec.trajectory(ch)(t), atol=1e-6, err_msg=ch)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), yaw=st.floats(-PI, PI))
def test_link_lengths_constant(seed, yaw):
    rng = np.random.default_rng(seed)
    name = ("squat", "push-up", "jumping jack", "single-leg romanian deadlift")[seed % 4]
    seq = generate_motion(with_yaw(perturbed(name, rng), yaw))
    j = seq.joint_arrays()
    for a, b in (("left shoulder", "left elbow"), ("left elbow", "left wrist"),
                 ("right hip", "right knee"), ("right knee", "right ankle"), ("left hip", "right hip")):
        d = np.linalg.norm(j[a] - j[b], axis=1)
        assert np.ptp(d) < 1e-9


def test_grounded_and_translation():
    seq = generate_motion(preset("squat", translation=(2.0, 5.0, -1.0)))
    j = seq.joint_arrays(list(JOINTS))
    lowest = np.min(np.stack([v[:, 1] for v in j.values()]), axis=0)
    # grounding puts the lowest joint at the translation height in every frame
    np.testing.assert_allclose(lowest, 5.0, atol=1e-12)
    floating = generate_motion(preset("stand", translation=(0.0, 5.0, 0.0), grounded=False, duration=0.1))
    assert min(v[1] for v in floating[0].joints.values()) > 3.0


def test_infeasible_angle():
    with pytest.raises(InfeasibleMotionError):
        generate_motion(MotionSpec({"left knee": Trajectory.sinusoid(3.0, 0.5, 1.0)}))
    with pytest.raises(ValueError):
        MotionSpec({"left tail": Trajectory.constant(1.0)})


def test_noise_is_seeded():
    a = generate_motion(preset("squat", noise=0.01, seed=3))
    b = generate_motion(preset("squat", noise=0.01, seed=3))
    c = generate_motion(preset("squat", noise=0.01, seed=4))
    assert serialize_pose_sequence(a) == serialize_pose_sequence(b)
    assert serialize_pose_sequence(a) != serialize_pose_sequence(c)


def test_output_parses_back():
    seq = generate_motion(preset("jumping jack", duration=1.0))
    again = parse_pose_sequence(serialize_pose_sequence(seq))
    assert len(again) == 30 and again.frame_rate == pytest.approx(30.0)


def test_spec_documents(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"preset": "squat", "period": 1.5, "duration": 3}')
    spec = load_motion_spec(path)
    assert spec.duration == 3 and spec.trajectory("left knee").period == 1.5
    spec = spec_from_mapping({"channels": {"left elbow": {"kind": "ramp", "value": 1.0, "rate": 0.2}},
                              "duration": 2})
    assert spec.trajectory("left elbow")(np.array([1.0]))[0] == pytest.approx(1.2)
    with pytest.raises(ValueError):
        spec_from_mapping({"preset": "squat", "colour": "red"})
    with pytest.raises(KeyError):
        preset("cartwheel")
