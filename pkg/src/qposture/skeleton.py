"""Stick-figure data model: joints, frames, pose sequences and the headlength unit.

Pose files are UTF-8, one JSON object per line::

    {"index": 0, "t": 0.0, "joints": {"nose": [x, y, z], "left eye": [...], ...}}

Coordinates are right-handed with y pointing up. Virtual joints (neck, mid-hip,
mid-ear) are never read from files; :func:`augment_frame` derives them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

import numpy as np

JOINTS: tuple[str, ...] = (
    "nose",
    "left eye", "right eye",
    "left ear", "right ear",
    "left mouth", "right mouth",
    "left shoulder", "right shoulder",
    "left elbow", "right elbow",
    "left wrist", "right wrist",
    "left index finger", "right index finger",
    "left hip", "right hip",
    "left knee", "right knee",
    "left ankle", "right ankle",
    "left heel", "right heel",
    "left big toe", "right big toe",
)
VIRTUAL_JOINTS: tuple[str, ...] = ("neck", "mid-hip", "mid-ear")
ALL_JOINTS: tuple[str, ...] = JOINTS + VIRTUAL_JOINTS

# Landmarks some estimators do not emit; tolerated when allow_missing_optional is set.
OPTIONAL_JOINTS: frozenset[str] = frozenset(
    f"{side} {part}" for side in ("left", "right") for part in ("index finger", "heel", "big toe")
)

_KNOWN = frozenset(JOINTS)


class PoseFormatError(ValueError):
    """A pose record is malformed or violates a sequence invariant."""

    def __init__(self, message: str, frame: int | None = None):
        self.frame = frame
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)


class DegenerateSkeletonError(ValueError):
    pass


def _vec(value) -> np.ndarray:
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Frame:
    index: int
    timestamp: float
    joints: Mapping[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.joints[name]

    def __contains__(self, name: str) -> bool:
        return name in self.joints

    @property
    def is_augmented(self) -> bool:
        return all(v in self.joints for v in VIRTUAL_JOINTS)

    def to_record(self) -> dict:
        """Serializable record holding only the measured (non-virtual) joints."""
        return {
            "index": self.index,
            "t": self.timestamp,
            "joints": {n: [float(c) for c in self.joints[n]] for n in JOINTS if n in self.joints},
        }


@dataclass(frozen=True)
class PoseSequence:
    frames: tuple[Frame, ...]
    frame_rate: float

    def __post_init__(self):
        if not (self.frame_rate > 0 and math.isfinite(self.frame_rate)):
            raise PoseFormatError(f"frame rate must be positive, got {self.frame_rate}")
        for i, fr in enumerate(self.frames):
            if fr.index != i:
                raise PoseFormatError(f"expected index {i}, got {fr.index}", fr.index)
            if i and not fr.timestamp > self.frames[i - 1].timestamp:
                raise PoseFormatError(
                    f"timestamp {fr.timestamp} does not increase past {self.frames[i - 1].timestamp}",
                    fr.index,
                )

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f.timestamp for f in self.frames], dtype=float)

    def joint_arrays(self, names: Iterable[str] | None = None) -> dict[str, np.ndarray]:
        """Stack joints across frames: name -> (n_frames, 3). Virtual joints are included."""
        if not self.frames:
            return {}
        frames = [augment_frame(f) for f in self.frames]
        available = set(frames[0].joints)
        for f in frames[1:]:
            available &= set(f.joints)
        if names is None:
            names = [n for n in ALL_JOINTS if n in available]
        return {n: np.stack([f.joints[n] for f in frames]) for n in names}


def make_frame(index: int, timestamp: float, joints: Mapping[str, Iterable[float]]) -> Frame:
    return Frame(int(index), float(timestamp), {n: _vec(v) for n, v in joints.items()})


def _check_frame(
    idx: int, joints: Mapping[str, object], allow_missing_optional: bool
) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for name, value in joints.items():
        if name in VIRTUAL_JOINTS:
            raise PoseFormatError(f"virtual joint {name!r} must not appear in input", idx)
        if name not in _KNOWN:
            raise PoseFormatError(f"unknown joint {name!r}", idx)
        try:
            arr = np.array(value, dtype=float)
        except (TypeError, ValueError):
            raise PoseFormatError(f"joint {name!r} is not a numeric 3-vector", idx) from None
        if arr.shape != (3,):
            raise PoseFormatError(f"joint {name!r} must have 3 coordinates", idx)
        if not np.all(np.isfinite(arr)):
            raise PoseFormatError(f"joint {name!r} has a non-finite coordinate", idx)
        arr.setflags(write=False)
        out[name] = arr
    for name in JOINTS:
        if name not in out and not (allow_missing_optional and name in OPTIONAL_JOINTS):
            raise PoseFormatError(f"missing required joint {name!r}", idx)
    return out


def parse_pose_sequence(
    source: IO[bytes] | IO[str] | bytes | str,
    frame_rate: float | None = None,
    *,
    allow_missing_optional: bool = False,
) -> PoseSequence:
    """Parse the line-delimited pose format into a validated (un-augmented) sequence.

    ``frame_rate`` is inferred from the median timestamp step when omitted.
    """
    if isinstance(source, (bytes, str)):
        text = source.decode("utf-8") if isinstance(source, bytes) else source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    frames: list[Frame] = []
    for lineno, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        pos = len(frames)
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise PoseFormatError(f"malformed record on line {lineno + 1}: {exc.msg}", pos) from None
        if not isinstance(rec, dict) or not {"index", "t", "joints"} <= rec.keys():
            raise PoseFormatError("record needs 'index', 't' and 'joints'", pos)
        idx, t, joints = rec["index"], rec["t"], rec["joints"]
        if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
            raise PoseFormatError(f"bad frame index {idx!r}", pos)
        if idx != pos:
            raise PoseFormatError(f"frame indices must be contiguous from 0, expected {pos}", idx)
        if not isinstance(t, (int, float)) or isinstance(t, bool) or not math.isfinite(t):
            raise PoseFormatError(f"bad timestamp {t!r}", idx)
        if frames and not t > frames[-1].timestamp:
            raise PoseFormatError(
                f"timestamps must increase strictly ({t} after {frames[-1].timestamp})", idx
            )
        if not isinstance(joints, dict):
            raise PoseFormatError("'joints' must be a mapping", idx)
        frames.append(Frame(idx, float(t), _check_frame(idx, joints, allow_missing_optional)))

    if frame_rate is None:
        if len(frames) < 2:
            raise PoseFormatError("cannot infer frame rate from fewer than two frames")
        frame_rate = 1.0 / float(np.median(np.diff([f.timestamp for f in frames])))
    return PoseSequence(tuple(frames), float(frame_rate))


def serialize_pose_sequence(seq: PoseSequence) -> str:
    return "".join(json.dumps(f.to_record()) + "\n" for f in seq.frames)


def augment_frame(frame: Frame) -> Frame:
    """Add the virtual joints neck, mid-hip and mid-ear as midpoints.

    Neck is the shoulder midpoint. Already-augmented frames are returned as is.
    """
    if frame.is_augmented:
        return frame
    j = frame.joints
    try:
        extra = {
            "neck": 0.5 * (j["left shoulder"] + j["right shoulder"]),
            "mid-hip": 0.5 * (j["left hip"] + j["right hip"]),
            "mid-ear": 0.5 * (j["left ear"] + j["right ear"]),
        }
    except KeyError as exc:
        raise PoseFormatError(f"cannot augment: missing joint {exc.args[0]!r}", frame.index) from None
    joints = dict(j)
    for name, v in extra.items():
        v.setflags(write=False)
        joints[name] = v
    return Frame(frame.index, frame.timestamp, joints)


def headlength_from(neck: np.ndarray, mid_ear: np.ndarray) -> np.ndarray:
    """Vectorized headlength, 2 * |neck -> mid-ear|, over (..., 3) arrays."""
    return 2.0 * np.linalg.norm(np.asarray(mid_ear) - np.asarray(neck), axis=-1)


def headlength(frame: Frame) -> float:
    frame = augment_frame(frame)
    value = float(headlength_from(frame["neck"], frame["mid-ear"]))
    if not value > 0.0:
        raise DegenerateSkeletonError(f"frame {frame.index}: neck and mid-ear coincide")
    return value
