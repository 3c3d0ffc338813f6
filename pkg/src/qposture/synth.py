"""Synthetic stick figures driven by joint-angle trajectories.

The generator places joints by forward kinematics so that the commanded elbow,
knee, armpit and hip angles are exactly the angles the fluent recipes measure.
It exists to give tests and demos sequences with known ground truth; it is not
a biomechanical model.

Body coordinates: the figure faces +z, its left is +x and y points up. Every
channel is a scalar trajectory; angle channels must stay inside [0, pi].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .skeleton import JOINTS, Frame, PoseSequence

PI = math.pi

ANGLE_CHANNELS = tuple(
    f"{side} {dof}" for side in ("left", "right") for dof in ("elbow", "armpit", "hip", "knee")
)
# Swing-plane azimuth: 0 swings the limb forward, pi/2 swings it outward.
PLANE_CHANNELS = tuple(f"{side} {limb} plane" for side in ("left", "right") for limb in ("arm", "leg"))
BODY_CHANNELS = ("pitch", "yaw")
CHANNELS = ANGLE_CHANNELS + PLANE_CHANNELS + BODY_CHANNELS

DEFAULTS: dict[str, float] = {
    **{f"{s} elbow": PI - 0.1 for s in ("left", "right")},
    **{f"{s} armpit": 0.15 for s in ("left", "right")},
    **{f"{s} hip": PI - 0.05 for s in ("left", "right")},
    **{f"{s} knee": PI - 0.05 for s in ("left", "right")},
    **{f"{s} arm plane": PI / 2 for s in ("left", "right")},
    **{f"{s} leg plane": 0.0 for s in ("left", "right")},
    "pitch": 0.0,
    "yaw": 0.0,
}

# Segment lengths and offsets in pose units for scale 1 (headlength 0.2).
HIP_HALF_WIDTH = 0.16
SHOULDER_HALF_WIDTH = 0.16
TORSO = 0.5
UPPER_ARM = 0.30
FOREARM = 0.27
HAND = 0.09
THIGH = 0.45
SHANK = 0.43
HEAD_OFFSETS = {  # relative to the neck
    "left ear": (0.07, 0.10, 0.0), "right ear": (-0.07, 0.10, 0.0),
    "nose": (0.0, 0.10, 0.09),
    "left eye": (0.035, 0.13, 0.075), "right eye": (-0.035, 0.13, 0.075),
    "left mouth": (0.025, 0.06, 0.08), "right mouth": (-0.025, 0.06, 0.08),
}
FOOT_OFFSETS = {"heel": (0.0, -0.05, -0.05), "big toe": (0.02, -0.06, 0.16)}  # left foot, at rest


class InfeasibleMotionError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """``constant``: value. ``ramp``: value + rate * t.
    ``sinusoid``: value + amplitude * sin(2 pi t / period + phase)."""

    kind: str = "constant"
    value: float = 0.0
    rate: float = 0.0
    amplitude: float = 0.0
    period: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "ramp", "sinusoid"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.kind == "sinusoid" and not self.period > 0:
            raise ValueError("sinusoid period must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.value)
        if self.kind == "ramp":
            return self.value + self.rate * t
        return self.value + self.amplitude * np.sin(2 * PI * t / self.period + self.phase)

    @classmethod
    def constant(cls, value):
        return cls("constant", value)

    @classmethod
    def ramp(cls, start, rate):
        return cls("ramp", start, rate=rate)

    @classmethod
    def sinusoid(cls, center, amplitude, period, phase=0.0):
        return cls("sinusoid", center, amplitude=amplitude, period=period, phase=phase)


@dataclass(frozen=True)
class MotionSpec:
    channels: Mapping[str, Trajectory] = field(default_factory=dict)
    duration: float = 6.0
    frame_rate: float = 30.0
    noise: float = 0.0
    seed: int = 0
    scale: float = 1.0
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    grounded: bool = True

    def __post_init__(self):
        unknown = set(self.channels) - set(CHANNELS)
        if unknown:
            raise ValueError(f"unknown channels: {sorted(unknown)}")
        if not (self.duration > 0 and self.frame_rate > 0 and self.scale > 0 and self.noise >= 0):
            raise ValueError("duration, frame_rate and scale must be positive; noise non-negative")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.frame_rate))

    def trajectory(self, name: str) -> Trajectory:
        return self.channels.get(name, Trajectory.constant(DEFAULTS[name]))


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _perp(w, d):
    """Component of ``w`` orthogonal to unit ``d``, normalized."""
    return _unit(w - np.sum(w * d, axis=-1, keepdims=True) * d)


def _rotate_from_down(offset, direction):
    """Rotate ``offset`` by the minimal rotation taking (0, -1, 0) to ``direction``."""
    down = np.array([0.0, -1.0, 0.0])
    axis = np.cross(down, direction)
    s = np.linalg.norm(axis, axis=-1, keepdims=True)
    c = np.sum(down * direction, axis=-1, keepdims=True)
    safe = s > 1e-12
    k = np.where(safe, axis / np.where(safe, s, 1.0), np.array([1.0, 0.0, 0.0]))
    # antiparallel: rotate by pi about x
    s = np.where(safe, s, 0.0)
    c = np.where(safe | (c > 0), c, -1.0)
    off = np.broadcast_to(offset, direction.shape)
    return off * c + np.cross(k, off) * s + k * np.sum(k * off, axis=-1, keepdims=True) * (1 - c)


def _rot_x(p):
    c, s = np.cos(p), np.sin(p)
    z, o = np.zeros_like(p), np.ones_like(p)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1), np.stack([z, s, c], -1)], -2)


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    z, o = np.zeros_like(a), np.ones_like(a)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)


def body_points(values: Mapping[str, np.ndarray], scale: float = 1.0) -> dict[str, np.ndarray]:
    """Joint positions in body coordinates (mid-hip at origin) for channel arrays of shape (n,)."""
    n = np.asarray(values["pitch"]).shape[0]
    forward = np.tile([0.0, 0.0, 1.0], (n, 1))
    pts: dict[str, np.ndarray] = {}
    for side, sx in (("left", 1.0), ("right", -1.0)):
        outward = np.tile([sx, 0.0, 0.0], (n, 1))
        shoulder = np.tile([sx * SHOULDER_HALF_WIDTH, TORSO, 0.0], (n, 1)) * scale
        hip = np.tile([sx * HIP_HALF_WIDTH, 0.0, 0.0], (n, 1)) * scale
        pts[f"{side} shoulder"], pts[f"{side} hip"] = shoulder, hip

        # arm: rotate the shoulder->hip direction by the armpit angle toward the swing plane
        a = np.asarray(values[f"{side} armpit"])[:, None]
        psi = np.asarray(values[f"{side} arm plane"])[:, None]
        d0 = _unit(hip - shoulder)
        w = _perp(np.cos(psi) * forward + np.sin(psi) * outward, d0)
        upper = np.cos(a) * d0 + np.sin(a) * w
        flex_dir = -np.sin(a) * d0 + np.cos(a) * w
        bend = PI - np.asarray(values[f"{side} elbow"])[:, None]
        fore = np.cos(bend) * upper + np.sin(bend) * flex_dir
        elbow = shoulder + UPPER_ARM * scale * upper
        wrist = elbow + FOREARM * scale * fore
        pts[f"{side} elbow"], pts[f"{side} wrist"] = elbow, wrist
        pts[f"{side} index finger"] = wrist + HAND * scale * fore

        # leg: hip angle is measured between the thigh and hip->shoulder
        g = PI - np.asarray(values[f"{side} hip"])[:, None]
        psi = np.asarray(values[f"{side} leg plane"])[:, None]
        e = _unit(shoulder - hip)
        w = _perp(np.cos(psi) * forward + np.sin(psi) * outward, e)
        thigh = np.cos(g) * -e + np.sin(g) * w
        back = -(np.sin(g) * e + np.cos(g) * w)
        k = PI - np.asarray(values[f"{side} knee"])[:, None]
        shank = np.cos(k) * thigh + np.sin(k) * back
        knee = hip + THIGH * scale * thigh
        ankle = knee + SHANK * scale * shank
        pts[f"{side} knee"], pts[f"{side} ankle"] = knee, ankle
        for part, off in FOOT_OFFSETS.items():
            off = np.array([sx * off[0], off[1], off[2]]) * scale
            pts[f"{side} {part}"] = ankle + _rotate_from_down(off, shank)

    neck = 0.5 * (pts["left shoulder"] + pts["right shoulder"])
    for name, off in HEAD_OFFSETS.items():
        pts[name] = neck + np.asarray(off) * scale
    return pts


def sample_channels(spec: MotionSpec) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    t = np.arange(spec.n_frames) / spec.frame_rate
    values = {name: spec.trajectory(name)(t) for name in CHANNELS}
    for name in ANGLE_CHANNELS:
        v = values[name]
        if np.any(v < 0) or np.any(v > PI):
            raise InfeasibleMotionError(f"channel {name!r} leaves [0, pi] (range {v.min():.3f}..{v.max():.3f})")
    return t, values


def generate_motion(spec: MotionSpec) -> PoseSequence:
    t, values = sample_channels(spec)
    pts = body_points(values, spec.scale)
    rot = _rot_y(values["yaw"]) @ _rot_x(values["pitch"])
    world = {name: np.einsum("nij,nj->ni", rot, p) for name, p in pts.items()}
    shift = np.tile(np.asarray(spec.translation, dtype=float), (t.size, 1))
    if spec.grounded:
        lowest = np.min(np.stack([p[:, 1] for p in world.values()]), axis=0)
        shift[:, 1] -= lowest
    rng = np.random.default_rng(spec.seed)
    frames = []
    for i in range(t.size):
        joints = {}
        for name in JOINTS:
            p = world[name][i] + shift[i]
            if spec.noise:
                p = p + rng.normal(0.0, spec.noise, 3)
            p = p.copy()
            p.setflags(write=False)
            joints[name] = p
        frames.append(Frame(i, float(t[i]), joints))
    return PoseSequence(tuple(frames), float(spec.frame_rate))


# ---------------------------------------------------------------------------
# Presets for the four exercises. Kinematics are hand-built approximations.

PRESETS = ("squat", "push-up", "jumping jack", "single-leg romanian deadlift", "stand")


def preset(
    name: str,
    *,
    period: float | None = None,
    amplitude: float = 1.0,
    phase: float = 0.0,
    **spec_kwargs,
) -> MotionSpec:
    """Motion spec for a named exercise.

    ``amplitude`` scales every oscillation, ``period`` replaces the default
    repetition period and ``phase`` shifts all channels together. Remaining
    keyword arguments go to :class:`MotionSpec`.
    """
    S = Trajectory.sinusoid
    C = Trajectory.constant

    def osc(center, amp, per, ph=0.0):
        return S(center, amp * amplitude, per, ph + phase)

    if name == "squat":
        T = period or 2.0
        ch = {
            "left knee": osc(2.3, 0.7, T, PI / 2), "right knee": osc(2.3, 0.7, T, PI / 2),
            "left hip": osc(2.3, 0.7, T, PI / 2), "right hip": osc(2.3, 0.7, T, PI / 2),
            "pitch": osc(0.12, 0.12, T, -PI / 2),
            "left armpit": C(PI / 2), "right armpit": C(PI / 2),
            "left arm plane": C(0.0), "right arm plane": C(0.0),
        }
    elif name == "push-up":
        T = period or 2.0
        ch = {
            "pitch": C(1.35),
            "left armpit": C(1.35), "right armpit": C(1.35),
            "left arm plane": C(0.0), "right arm plane": C(0.0),
            "left elbow": osc(2.3, 0.7, T, PI / 2), "right elbow": osc(2.3, 0.7, T, PI / 2),
            "left knee": C(PI - 0.03), "right knee": C(PI - 0.03),
        }
    elif name == "jumping jack":
        T = period or 1.0
        ch = {
            "left armpit": osc(1.6, 1.3, T, -PI / 2), "right armpit": osc(1.6, 1.3, T, -PI / 2),
            "left hip": osc(PI - 0.25, -0.2, T, -PI / 2), "right hip": osc(PI - 0.25, -0.2, T, -PI / 2),
            "left leg plane": C(PI / 2), "right leg plane": C(PI / 2),
        }
    elif name == "single-leg romanian deadlift":
        T = period or 3.0
        ch = {
            "pitch": osc(0.72, 0.62, T, -PI / 2),
            "left hip": osc(PI - 0.72, -0.62, T, -PI / 2),
            "left knee": C(PI - 0.25),
            "right hip": C(PI - 0.05), "right knee": C(PI - 0.1),
            "left armpit": osc(0.72, 0.62, T, -PI / 2), "right armpit": osc(0.72, 0.62, T, -PI / 2),
            "left arm plane": C(0.0), "right arm plane": C(0.0),
        }
    elif name == "stand":
        ch = {}
    else:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESETS}")
    return MotionSpec(ch, **spec_kwargs)


# ---------------------------------------------------------------------------
# Spec files


def spec_from_mapping(doc: Mapping) -> MotionSpec:
    """Build a MotionSpec from a config document.

    ``{"preset": name, ...preset options}`` or
    ``{"channels": {name: {"kind": ..., ...}}, "duration": ..., ...}``.
    """
    doc = dict(doc)
    if "preset" in doc:
        name = doc.pop("preset")
        return preset(name, **_spec_kwargs(doc, allow_preset=True))
    channels = {k: Trajectory(**v) for k, v in doc.pop("channels", {}).items()}
    return MotionSpec(channels, **_spec_kwargs(doc))


def _spec_kwargs(doc: Mapping, allow_preset: bool = False) -> dict:
    allowed = {"duration", "frame_rate", "noise", "seed", "scale", "translation", "grounded"}
    if allow_preset:
        allowed |= {"period", "amplitude", "phase"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown motion spec keys: {sorted(unknown)}")
    out = dict(doc)
    if "translation" in out:
        out["translation"] = tuple(float(x) for x in out["translation"])
    return out


def load_motion_spec(path: str | Path) -> MotionSpec:
    return spec_from_mapping(json.loads(Path(path).read_text(encoding="utf-8")))


def perturbed(name: str, rng: np.random.Generator, **spec_kwargs) -> MotionSpec:
    """A randomly varied instance of a preset, for building test corpora."""
    return preset(
        name,
        period=None if name == "stand" else _base_period(name) * rng.uniform(0.85, 1.2),
        amplitude=rng.uniform(0.88, 1.12),
        phase=rng.uniform(-0.3, 0.3),
        scale=rng.uniform(0.9, 1.1),
        translation=(rng.uniform(-1, 1), 0.0, rng.uniform(-1, 1)),
        seed=int(rng.integers(2**31)),
        **spec_kwargs,
    )


def _base_period(name: str) -> float:
    return {"squat": 2.0, "push-up": 2.0, "jumping jack": 1.0, "single-leg romanian deadlift": 3.0}[name]


def with_yaw(spec: MotionSpec, yaw: float) -> MotionSpec:
    return replace(spec, channels={**spec.channels, "yaw": Trajectory.constant(yaw)})
