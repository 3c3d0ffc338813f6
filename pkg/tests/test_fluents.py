import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _helpers import random_rotation
from qposture.fluents import (
    DEFAULT_EPSILON,
    LOWER,
    UPPER,
    FluentConfigError,
    FluentSpec,
    NearConfig,
    TemporalWindow,
    TransitionSpec,
    default_config,
    default_registry,
    eval_instantaneous,
    eval_near,
    eval_temporal,
    fluent_stream,
    load_fluent_config,
    middle_confidence,
    near_pairs,
    step_motion_confidence,
    temporal_confidences,
    transition_confidence,
)
from qposture.skeleton import PoseSequence, make_frame
from qposture.synth import MotionSpec, Trajectory, generate_motion

PI = math.pi
EPS = DEFAULT_EPSILON
ARM_BENT = TransitionSpec(5 * PI / 8, PI / 8, LOWER, "bent")


def pose(**channels):
    chans = {k.replace("_", " "): Trajectory.constant(v) for k, v in channels.items()}
    return generate_motion(MotionSpec(chans, duration=1 / 30))[0]


def _registry():
    return {s.id: s for s in default_registry()}


# --- transition curves -------------------------------------------------------


def test_arm_bent_curve_points():
    assert transition_confidence(PI / 2, ARM_BENT) == 1.0
    assert transition_confidence(5 * PI / 8, ARM_BENT) == 0.5
    # the band edge itself is saturated; approaching it from inside gives epsilon
    assert transition_confidence(3 * PI / 4, ARM_BENT) == 0.0
    assert transition_confidence(3 * PI / 4 - 1e-9, ARM_BENT) == pytest.approx(EPS, rel=1e-6)


def test_upper_direction_mirrors_lower():
    up = TransitionSpec(1.0, 0.2, UPPER)
    lo = TransitionSpec(1.0, 0.2, LOWER)
    xs = np.linspace(0.5, 1.5, 101)
    np.testing.assert_allclose(transition_confidence(xs, up), 1 - transition_confidence(xs, lo), atol=1e-12)


def test_epsilon_validated():
    with pytest.raises(ValueError):
        transition_confidence(1.0, ARM_BENT, epsilon=0.5)
    with pytest.raises(FluentConfigError):
        TransitionSpec(1.0, 0.0, LOWER)
    with pytest.raises(FluentConfigError):
        TransitionSpec(1.0, 0.1, "sideways")


@pytest.mark.parametrize("c0, c2, expected", [(1, 0, 0), (0, 0, 1), (0.5, 0, 0.5)])
def test_middle_confidence(c0, c2, expected):
    assert middle_confidence(c0, c2) == expected


@settings(max_examples=200, deadline=None)
@given(
    tau=st.floats(0.1, 3.0),
    delta=st.floats(0.01, 0.5),
    a=st.floats(-1, 5),
    b=st.floats(-1, 5),
    lower=st.booleans(),
)
def test_transition_monotone(tau, delta, a, b, lower):
    spec = TransitionSpec(tau, delta, LOWER if lower else UPPER)
    lo, hi = sorted((a, b))
    c_lo, c_hi = transition_confidence(lo, spec), transition_confidence(hi, spec)
    assert 0.0 <= c_lo <= 1.0 and 0.0 <= c_hi <= 1.0
    assert (c_hi <= c_lo) if lower else (c_hi >= c_lo)


@settings(max_examples=100, deadline=None)
@given(x=st.floats(0.0, PI))
def test_state_sums(x):
    for spec in default_registry():
        conf = spec.state_confidences(x)
        total = sum(conf.values())
        assert all(0.0 <= c <= 1.0 for c in conf.values())
        if len(spec.states) == 2:
            assert total == 1.0 or abs(total - 1.0) < 1e-15
        else:
            near_edge = any(abs(abs(x - t.tau) - t.delta) < 1e-12 for t in spec.transitions)
            if not near_edge:
                assert abs(total - 1.0) <= 1e-9


def test_registry_shape():
    reg = default_registry()
    assert len(reg) == len({s.id for s in reg}) == 22
    fams = {s.family for s in reg}
    assert fams == {"Bent", "InFront", "Raised", "Outward", "Tilted", "Twisted"}
    r = _registry()
    assert r["left leg raised"].states == ("raised", "lowered")
    assert r["left arm raised"].transitions[1].tau == 9 * PI / 16


def test_fluent_spec_validation():
    t = TransitionSpec(1.0, 0.1, LOWER)
    with pytest.raises(FluentConfigError):
        FluentSpec("x", "Bent", ("a",), (), "bent", "arm")
    with pytest.raises(FluentConfigError):
        FluentSpec("x", "Bent", ("a", "b", "c"), (t,), "bent", "arm")
    with pytest.raises(FluentConfigError, match="overlap"):
        FluentSpec("x", "InFront", ("a", "b", "c"), (TransitionSpec(1.0, 0.3, LOWER), TransitionSpec(1.2, 0.3, UPPER)),
                   "in_front", "arm")
    with pytest.raises(FluentConfigError):
        FluentSpec("x", "Bent", ("a", "b"), (TransitionSpec(4.0, 0.1, LOWER),), "bent", "arm")


# --- instantaneous -------------------------------------------------------------


def test_straight_arm():
    rep = eval_instantaneous(pose(left_elbow=PI))
    assert rep.entries["left arm bent:straight"] == 1.0
    assert rep.entries["left arm bent:bent"] == 0.0


def test_arm_overhead():
    rep = eval_instantaneous(pose(left_armpit=PI - 1e-6))
    assert rep.entries["left arm raised:raised"] == pytest.approx(1.0)


def test_t_pose_chest_level():
    rep = eval_instantaneous(pose(left_armpit=PI / 2, left_arm_plane=PI / 2))
    e = rep.entries
    assert e["left arm raised:chest-level"] == pytest.approx(1.0, abs=1e-6)
    assert e["left arm raised:lowered"] <= EPS
    assert e["left arm raised:raised"] <= EPS


def test_bent_knee_and_arm_in_front():
    rep = eval_instantaneous(pose(left_knee=PI / 2, right_armpit=PI / 2, right_arm_plane=0.0))
    assert rep.entries["left leg bent:bent"] == 1.0
    assert rep.entries["right arm in front:in front"] == pytest.approx(1.0)
    # a limb pointing straight forward has no extent in the frontal plane
    assert "right arm outward" in rep.indeterminate


def test_tilt_group_reports_centered(stand_frame):
    rep = eval_instantaneous(stand_frame)
    assert "torso tilted:centered" in rep.entries
    assert "head tilted:centered" in rep.entries
    assert "torso tilted forward:centered" not in rep.entries
    assert rep.entries["head twisted left:centered"] == pytest.approx(1.0)


def test_degenerate_measure_is_indeterminate(stand_frame):
    j = dict(stand_frame.joints)
    j["left elbow"] = j["left wrist"]
    rep = eval_instantaneous(make_frame(0, 0.0, j))
    assert "left arm bent" in rep.indeterminate
    assert not any(k.startswith("left arm bent:") for k in rep.entries)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rigid_and_scale_invariance(seed):
    rng = np.random.default_rng(seed)
    f = pose(left_elbow=rng.uniform(0.3, 3.0), right_armpit=rng.uniform(0.2, 3.0),
             left_knee=rng.uniform(0.5, 3.0), pitch=rng.uniform(-0.3, 0.3))
    R, s, shift = random_rotation(rng), rng.uniform(0.5, 2.0), rng.normal(size=3)
    g = make_frame(0, 0.0, {n: s * (R @ v) + shift for n, v in f.joints.items()})
    a, b = eval_instantaneous(f), eval_instantaneous(g)
    assert a.entries.keys() == b.entries.keys()
    for k in a.entries:
        assert abs(a.entries[k] - b.entries[k]) < 1e-6


# --- near ----------------------------------------------------------------------


def test_near_pairs():
    pairs = near_pairs()
    assert len(pairs) == 74
    keys = {frozenset(p) for p in pairs}
    assert len(keys) == len(pairs)
    assert frozenset(("left index finger", "left wrist")) not in keys
    assert frozenset(("left index finger", "right wrist")) in keys
    assert frozenset(("left heel", "left big toe")) not in keys
    assert all(a != b for a, b in pairs)


def test_near_thresholds(stand_frame):
    j = dict(stand_frame.joints)
    hl = 0.2  # synth headlength at scale 1
    nose = j["nose"]
    for dist, expected in ((0.2, 1.0), (0.5, 0.5)):
        j["left index finger"] = nose + np.array([dist * hl, 0.0, 0.0])
        rep = eval_near(make_frame(0, 0.0, j))
        assert rep.entries["left index finger near nose:near"] == pytest.approx(expected, abs=1e-9)
    j["left index finger"] = nose + np.array([0.05, 0.0, 0.0])
    rep = eval_near(make_frame(0, 0.0, j))
    assert rep.entries["left index finger near nose:touching"] == 1.0
    j["left index finger"] = nose + np.array([0.15, 0.0, 0.0])
    assert eval_near(make_frame(0, 0.0, j)).entries["left index finger near nose:touching"] == 0.0


# --- temporal --------------------------------------------------------------------


@pytest.mark.parametrize("d, expected", [(PI / 36, 1.0), (PI / 72, 0.5)])
def test_step_motion(d, expected):
    assert step_motion_confidence(d, "increasing") == pytest.approx(expected)


def test_step_motion_at_rest():
    # zero change sits on the band edge (saturated); just above it is epsilon
    assert step_motion_confidence(0.0, "increasing") == 0.0
    assert step_motion_confidence(1e-10, "increasing") == pytest.approx(EPS, rel=1e-4)
    assert step_motion_confidence(-PI / 36, "decreasing") == 1.0
    with pytest.raises(ValueError):
        step_motion_confidence(0.0, "sideways")


def test_temporal_constant_and_ramp():
    bent = _registry()["left arm bent"]
    c = eval_temporal([1.0] * 6, bent)
    assert c["left arm bent:still"] >= 1 - 2 * EPS
    down = [2.0 - k * PI / 36 for k in range(6)]
    c = eval_temporal(down, bent)
    assert c["left arm bent:bending"] == 1.0
    assert c["left arm bent:still"] == 0.0


def test_temporal_window_resets():
    w = TemporalWindow(5)
    bent = _registry()["left arm bent"]
    for k in range(5):
        w.push(1.0 + 0.1 * k)
    assert not w.ready and eval_temporal(w, bent) == {}
    w.push(1.5)
    assert w.ready and len(w.history) == 6
    w.push(None)
    assert not w.ready and w.history == []


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-0.2, 0.2), min_size=5, max_size=5))
def test_temporal_range(diffs):
    h = np.concatenate([[1.0], 1.0 + np.cumsum(diffs)])
    for c in temporal_confidences(h):
        assert 0.0 <= c <= 1.0


def test_recency_weighting():
    # one partial step among saturated ones: it hurts more when it is the newest
    base = [PI / 36] * 5
    older = [PI / 72] + base[1:]
    newer = base[:-1] + [PI / 72]
    h_old = np.concatenate([[0.0], np.cumsum(older)])
    h_new = np.concatenate([[0.0], np.cumsum(newer)])
    up_old = temporal_confidences(h_old, first_moves_down=False)[0]
    up_new = temporal_confidences(h_new, first_moves_down=False)[0]
    assert up_new < up_old
    assert up_new == pytest.approx(0.5)
    assert up_old == pytest.approx(0.5 ** (1 / 5))


# --- stream ----------------------------------------------------------------------


def test_stream_constant_pose(stand_frame):
    frames = tuple(make_frame(i, i / 30, stand_frame.joints) for i in range(10))
    stream = fluent_stream(PoseSequence(frames, 30.0))
    assert len(stream) == 10
    inst = {k: v for k, v in stream[0].entries.items()}
    for i, rep in enumerate(stream):
        has_temporal = "left arm bent:still" in rep.entries
        assert has_temporal == (i >= 5)
        for k, v in inst.items():
            assert rep.entries[k] == v
    assert stream[5].entries["left arm bent:still"] >= 0.99


def test_stream_empty():
    assert len(fluent_stream(PoseSequence((), 30.0))) == 0


def test_stream_matches_single_frame(squat_seq):
    stream = fluent_stream(squat_seq)
    for i in (0, 17, 40):
        single = eval_instantaneous(squat_seq[i])
        for k, v in single.entries.items():
            assert stream[i].entries[k] == pytest.approx(v, abs=1e-12)


def test_jumping_jack_arms_alternate(jack_seq):
    stream = fluent_stream(jack_seq)
    raising = [r.entries.get("left arm raised:raising", 0.0) > 0.5 for r in stream]
    lowering = [r.entries.get("left arm raised:lowering", 0.0) > 0.5 for r in stream]
    assert any(raising) and any(lowering)
    # armpit angle peaks every second at 30 fps: both directions each second
    for start in range(5, 150, 30):
        seg = slice(start, start + 30)
        assert any(raising[seg]) and any(lowering[seg])
    for side in ("left", "right"):
        assert any(r.entries.get(f"{side} arm raised:raised", 0) > 0.5 for r in stream)
        assert any(r.entries.get(f"{side} arm raised:lowered", 0) > 0.5 for r in stream)


def test_indeterminate_resets_temporal(stand_frame):
    frames = []
    for i in range(12):
        j = dict(stand_frame.joints)
        if i == 7:
            j["left elbow"] = j["left wrist"]
        frames.append(make_frame(i, i / 30, j))
    stream = fluent_stream(PoseSequence(tuple(frames), 30.0))
    have = ["left arm bent:still" in r.entries for r in stream]
    assert have == [False] * 5 + [True, True] + [False] * 5 + []
    assert "left arm bent" in stream[7].indeterminate


# --- config ----------------------------------------------------------------------


def test_default_config_round_trip():
    reg, near, r = load_fluent_config(default_config())
    assert [s.transitions for s in reg] == [s.transitions for s in default_registry()]
    assert near == NearConfig() and r == 5


def test_config_overrides(tmp_path):
    path = tmp_path / "f.json"
    path.write_text('{"left arm bent": {"tau": 1.5}, "window": 3, "near": {"touching": 0.2}}')
    reg, near, r = load_fluent_config(str(path))
    spec = {s.id: s for s in reg}["left arm bent"]
    assert spec.transitions[0].tau == 1.5 and spec.transitions[0].delta == PI / 8
    assert r == 3 and near.touching == 0.2


@pytest.mark.parametrize(
    "doc",
    [{"no such fluent": {}}, {"window": 0}, {"left arm raised": {"state": "flying"}}, {"near": 3},
     {"left arm raised": [{"tau": 1.0}, {"tau": 1.1}]}],
)
def test_config_errors(doc):
    with pytest.raises(FluentConfigError):
        load_fluent_config(doc)
