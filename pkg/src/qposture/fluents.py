"""Qualitative posture fluents with confidences.

Every fluent maps one measurement (an angle, or a joint distance in headlengths)
onto an ordered list of states. Confidence is 0 or 1 away from a threshold and
follows a logistic curve inside the band ``[tau - delta, tau + delta]``. Three-state
fluents get the middle state from the product of the two outer complements.

Locally temporal fluents look at the last ``r`` frame-to-frame changes of the
same measurement and report motion toward either extreme state, or none.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import project_onto_plane, torso_frames, vector_angles, vertex_angles
from .skeleton import Frame, JOINTS, PoseSequence, augment_frame, headlength_from

PI = math.pi
DEFAULT_EPSILON = 1e-3
DEFAULT_WINDOW = 5
# Angle-rate thresholds for every angle-based temporal fluent (radians per frame).
TEMPORAL_ANGLE_TAU = PI / 72
TEMPORAL_ANGLE_DELTA = PI / 72
# Measurements this close to a band edge count as saturated (absorbs round-off).
EDGE_TOL = 1e-12

LOWER = "lower"
UPPER = "upper"


class FluentConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TransitionSpec:
    """Threshold between an extreme state and its neighbour.

    ``direction`` is ``lower`` when the state's confidence is 1 below the band
    and ``upper`` when it is 1 above it.
    """

    tau: float
    delta: float
    direction: str
    state: str = ""

    def __post_init__(self):
        if self.direction not in (LOWER, UPPER):
            raise FluentConfigError(f"direction must be 'lower' or 'upper', got {self.direction!r}")
        if not (self.delta > 0 and math.isfinite(self.delta) and math.isfinite(self.tau)):
            raise FluentConfigError(f"bad transition tau={self.tau} delta={self.delta}")

    @property
    def band(self) -> tuple[float, float]:
        return self.tau - self.delta, self.tau + self.delta


def transition_confidence(x, spec: TransitionSpec, epsilon: float = DEFAULT_EPSILON):
    """Confidence of the state owning ``spec`` at measurement ``x`` (vectorized)."""
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    x = np.asarray(x, dtype=float)
    slope = math.log((1.0 - epsilon) / epsilon) / spec.delta
    z = slope * (x - spec.tau)
    if spec.direction == UPPER:
        z = -z
    with np.errstate(over="ignore"):
        c = 1.0 / (1.0 + np.exp(z))
    lo, hi = spec.band
    below = x <= lo + EDGE_TOL
    above = x >= hi - EDGE_TOL
    if spec.direction == LOWER:
        c = np.where(below, 1.0, np.where(above, 0.0, c))
    else:
        c = np.where(below, 0.0, np.where(above, 1.0, c))
    c = np.where(np.isnan(x), np.nan, c)
    return float(c) if c.ndim == 0 else c


def middle_confidence(c0, c2):
    """Middle-state confidence of a three-state fluent from its two outer states."""
    return (1.0 - c0) * (1.0 - c2)


@dataclass(frozen=True)
class FluentSpec:
    """One angle-driven fluent.

    ``measure`` names the geometric recipe (see :func:`measure_all`); ``limb`` and
    ``side`` select the joints it uses. ``temporal_states`` holds the names for
    motion toward the first state, toward the last state, and no motion.
    Fluents sharing a ``group`` (the two tilt directions of one body part) report
    a single combined centered state.
    """

    id: str
    family: str
    states: tuple[str, ...]
    transitions: tuple[TransitionSpec, ...]
    measure: str
    limb: str
    side: str = ""
    temporal_states: tuple[str, str, str] = ("", "", "still")
    group: str = ""
    temporal_tau: float = TEMPORAL_ANGLE_TAU
    temporal_delta: float = TEMPORAL_ANGLE_DELTA

    def __post_init__(self):
        n = len(self.states)
        if n not in (2, 3):
            raise FluentConfigError(f"{self.id}: fluents have 2 or 3 states, got {n}")
        if len(self.transitions) != n - 1:
            raise FluentConfigError(f"{self.id}: {n}-state fluent needs {n - 1} transition(s)")
        for tr in self.transitions:
            if not 0.0 < tr.tau < PI:
                raise FluentConfigError(f"{self.id}: angle threshold {tr.tau} outside (0, pi)")
        if n == 3:
            t0, t2 = self.transitions
            if t0.direction == t2.direction:
                raise FluentConfigError(f"{self.id}: outer states need opposite directions")
            low, high = (t0, t2) if t0.direction == LOWER else (t2, t0)
            # the default bands share edges, so touching is allowed
            if low.band[1] > high.band[0] + EDGE_TOL:
                raise FluentConfigError(f"{self.id}: transition bands overlap")

    @property
    def first_moves_down(self) -> bool:
        """True when the first state lies at small measurement values."""
        return self.transitions[0].direction == LOWER

    def state_confidences(self, x, epsilon: float = DEFAULT_EPSILON) -> dict[str, np.ndarray]:
        c0 = transition_confidence(x, self.transitions[0], epsilon)
        if len(self.states) == 2:
            return {self.states[0]: c0, self.states[1]: 1.0 - c0}
        c2 = transition_confidence(x, self.transitions[1], epsilon)
        return {self.states[0]: c0, self.states[1]: middle_confidence(c0, c2), self.states[2]: c2}


# ---------------------------------------------------------------------------
# Default registry


def _tr(tau, delta, direction, state):
    return TransitionSpec(tau, delta, direction, state)


def _three(lo_state, hi_state, lo_tau=7 * PI / 16, hi_tau=9 * PI / 16, delta=PI / 16):
    return (_tr(lo_tau, delta, LOWER, lo_state), _tr(hi_tau, delta, UPPER, hi_state))


def default_registry() -> tuple[FluentSpec, ...]:
    specs: list[FluentSpec] = []
    for side in ("left", "right"):
        specs += [
            FluentSpec(f"{side} arm bent", "Bent", ("bent", "straight"),
                       (_tr(5 * PI / 8, PI / 8, LOWER, "bent"),), "bent", "arm", side,
                       ("bending", "straightening", "still")),
            FluentSpec(f"{side} leg bent", "Bent", ("bent", "straight"),
                       (_tr(19 * PI / 24, PI / 24, LOWER, "bent"),), "bent", "leg", side,
                       ("bending", "straightening", "still")),
        ]
    for side in ("left", "right"):
        for limb in ("arm", "leg"):
            specs.append(
                FluentSpec(f"{side} {limb} in front", "InFront", ("in front", "centered", "behind"),
                           _three("in front", "behind"), "in_front", limb, side,
                           ("moving forward", "moving backward", "still")))
    for side in ("left", "right"):
        specs += [
            FluentSpec(f"{side} arm raised", "Raised", ("lowered", "chest-level", "raised"),
                       (_tr(3 * PI / 8, PI / 8, LOWER, "lowered"), _tr(9 * PI / 16, PI / 16, UPPER, "raised")),
                       "raised", "arm", side, ("lowering", "raising", "still")),
            FluentSpec(f"{side} leg raised", "Raised", ("raised", "lowered"),
                       (_tr(13 * PI / 16, PI / 16, LOWER, "raised"),), "raised", "leg", side,
                       ("raising", "lowering", "still")),
        ]
    for side in ("left", "right"):
        for limb in ("arm", "leg"):
            specs.append(
                FluentSpec(f"{side} {limb} outward", "Outward", ("outward", "at side", "inward"),
                           _three("outward", "inward"), "outward", limb, side,
                           ("moving outward", "moving inward", "still")))
    for part in ("head", "torso"):
        specs += [
            FluentSpec(f"{part} tilted forward", "Tilted", ("tilted forward", "centered", "tilted backward"),
                       _three("tilted forward", "tilted backward"), "tilt_forward", part, "",
                       ("tilting forward", "tilting backward", "still"), group=f"{part} tilted"),
            FluentSpec(f"{part} tilted left", "Tilted", ("tilted left", "centered", "tilted right"),
                       _three("tilted left", "tilted right"), "tilt_left", part, "",
                       ("tilting left", "tilting right", "still"), group=f"{part} tilted"),
        ]
    for part in ("head", "torso"):
        specs.append(
            FluentSpec(f"{part} twisted left", "Twisted", ("twisted left", "centered", "twisted right"),
                       _three("twisted left", "twisted right"), "twist", part, "",
                       ("twisting left", "twisting right", "still")))
    return tuple(specs)


# ---------------------------------------------------------------------------
# Near


NEAR_FROM: tuple[str, ...] = ("left index finger", "right index finger", "left heel", "right heel")
NEAR_TO: tuple[str, ...] = NEAR_FROM + (
    "nose", "left eye", "right eye", "left ear", "right ear", "left mouth", "right mouth",
    "left shoulder", "left elbow", "left wrist", "right shoulder", "right elbow", "right wrist",
    "left hip", "right hip", "left knee", "right knee", "left big toe", "right big toe",
)
_NEAR_EXCLUDED = {
    ("index finger", "wrist"), ("index finger", "elbow"), ("heel", "knee"), ("heel", "big toe"),
}


def _split(joint: str) -> tuple[str, str]:
    side, _, part = joint.partition(" ")
    return (side, part) if side in ("left", "right") else ("", joint)


def near_pairs(allowed: Iterable[str] | None = None) -> tuple[tuple[str, str], ...]:
    """Permitted (from, to) pairs as unordered, deduplicated tuples in a fixed order."""
    allowed_set = set(JOINTS if allowed is None else allowed)
    seen: set[frozenset] = set()
    pairs = []
    for a in NEAR_FROM:
        for b in NEAR_TO:
            if a == b or a not in allowed_set or b not in allowed_set:
                continue
            (sa, pa), (sb, pb) = _split(a), _split(b)
            if sa == sb and (pa, pb) in _NEAR_EXCLUDED:
                continue
            key = frozenset((a, b))
            if key in seen:
                continue
            seen.add(key)
            pairs.append((a, b))
    return tuple(pairs)


@dataclass(frozen=True)
class NearConfig:
    """Distance fluents. ``near`` is in headlengths, ``touching`` in raw pose units."""

    pairs: tuple[tuple[str, str], ...] = field(default_factory=near_pairs)
    near: TransitionSpec = TransitionSpec(0.5, 0.25, LOWER, "near")
    touching: float = 0.1
    temporal_tau: float = 0.05
    temporal_delta: float = 0.05
    states: tuple[str, str, str] = ("near", "far", "touching")
    temporal_states: tuple[str, str, str] = ("approaching", "distancing", "still")

    @staticmethod
    def fluent_id(a: str, b: str) -> str:
        return f"{a} near {b}"

    def restricted_to(self, available: Iterable[str]) -> "NearConfig":
        available = set(available)
        return replace(self, pairs=tuple(p for p in self.pairs if p[0] in available and p[1] in available))


# ---------------------------------------------------------------------------
# Measurements


def measure_all(
    joints: Mapping[str, np.ndarray], registry: Sequence[FluentSpec]
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Measurement series for every fluent: id -> (values, valid).

    ``joints`` maps augmented joint names to ``(..., 3)`` arrays.
    """
    hl = headlength_from(joints["neck"], joints["mid-ear"])
    frames = {s: torso_frames(joints, s) for s in ("left", "right")}
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for spec in registry:
        out[spec.id] = _measure(spec, joints, frames, hl)
    return out


def _measure(spec: FluentSpec, j, frames, hl):
    side = spec.side
    if spec.limb == "arm":
        root, mid, end = f"{side} shoulder", f"{side} elbow", f"{side} wrist"
        anchor = f"{side} hip"
    elif spec.limb == "leg":
        root, mid, end = f"{side} hip", f"{side} knee", f"{side} ankle"
        anchor = f"{side} shoulder"
    tf = frames[side or "left"]
    m = spec.measure
    if m == "bent":
        angle, valid = vertex_angles(j[root], j[mid], j[end])
        return angle, valid
    if m == "raised":
        angle, valid = vertex_angles(j[mid], j[root], j[anchor])
        return angle, valid
    if m == "in_front":
        u = project_onto_plane(j[mid] - j[root], tf.sagittal_normal)
        v = project_onto_plane(tf.forward, tf.sagittal_normal)
    elif m == "outward":
        u = project_onto_plane(j[mid] - j[root], tf.frontal_normal)
        v = project_onto_plane(tf.lateral, tf.frontal_normal)
    elif m in ("tilt_forward", "tilt_left"):
        base, tip = ("neck", "mid-ear") if spec.limb == "head" else ("mid-hip", "neck")
        if m == "tilt_forward":
            u = project_onto_plane(j[tip] - j[base], tf.sagittal_normal)
            v = project_onto_plane(tf.forward, tf.sagittal_normal)
        else:
            u = project_onto_plane(j[tip] - j[base], tf.frontal_normal)
            v = project_onto_plane(tf.lateral, tf.frontal_normal)
    elif m == "twist":
        if spec.limb == "head":
            u = project_onto_plane(j["nose"] - j["neck"], tf.transverse_normal)
            v = project_onto_plane(j["left shoulder"] - j["neck"], tf.transverse_normal)
        else:
            u = project_onto_plane(j["mid-hip"] - j["left hip"], tf.transverse_normal)
            v = project_onto_plane(tf.forward, tf.transverse_normal)
    else:
        raise FluentConfigError(f"{spec.id}: unknown measurement {m!r}")
    angle, valid = vector_angles(u, v, scale=hl)
    valid = valid & tf.valid
    return np.where(valid, angle, np.nan), valid


def near_distances(joints: Mapping[str, np.ndarray], cfg: NearConfig):
    """id -> (raw distance, distance in headlengths, valid)."""
    hl = headlength_from(joints["neck"], joints["mid-ear"])
    hl_ok = hl > 0
    out = {}
    for a, b in cfg.pairs:
        raw = np.linalg.norm(joints[a] - joints[b], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(hl_ok, raw / np.where(hl_ok, hl, 1.0), np.nan)
        out[cfg.fluent_id(a, b)] = (raw, rel, hl_ok)
    return out


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class FluentReport:
    frame_index: int
    entries: Mapping[str, float]
    indeterminate: frozenset[str] = frozenset()

    def to_record(self) -> dict:
        return {
            "frame": self.frame_index,
            "fluents": dict(self.entries),
            "indeterminate": sorted(self.indeterminate),
        }


def _instantaneous_entries(registry, series, index, epsilon, entries, indeterminate):
    groups: dict[str, float] = {}
    bad_groups: set[str] = set()
    for spec in registry:
        values, valid = series[spec.id]
        if not valid[index]:
            indeterminate.add(spec.id)
            if spec.group:
                bad_groups.add(spec.group)
            continue
        conf = spec.state_confidences(values[index], epsilon)
        if spec.group:
            lo, hi = spec.states[0], spec.states[-1]
            entries[f"{spec.id}:{lo}"] = float(conf[lo])
            entries[f"{spec.id}:{hi}"] = float(conf[hi])
            groups[spec.group] = groups.get(spec.group, 1.0) * (1.0 - conf[lo]) * (1.0 - conf[hi])
        else:
            for state, c in conf.items():
                entries[f"{spec.id}:{state}"] = float(c)
    for group, c in groups.items():
        if group in bad_groups:
            indeterminate.add(group)
        else:
            entries[f"{group}:centered"] = float(c)


def _near_entries(cfg: NearConfig, dist, index, epsilon, entries, indeterminate):
    near_s, far_s, touch_s = cfg.states
    for fid, (raw, rel, ok) in dist.items():
        if not ok[index]:
            indeterminate.add(fid)
            continue
        c = transition_confidence(rel[index], cfg.near, epsilon)
        entries[f"{fid}:{near_s}"] = c
        entries[f"{fid}:{far_s}"] = 1.0 - c
        entries[f"{fid}:{touch_s}"] = 1.0 if raw[index] <= cfg.touching else 0.0


def eval_instantaneous(
    frame: Frame, registry: Sequence[FluentSpec] | None = None, epsilon: float = DEFAULT_EPSILON
) -> FluentReport:
    registry = default_registry() if registry is None else registry
    frame = augment_frame(frame)
    joints = {n: v[None, :] for n, v in frame.joints.items()}
    series = measure_all(joints, registry)
    entries: dict[str, float] = {}
    indeterminate: set[str] = set()
    _instantaneous_entries(registry, series, 0, epsilon, entries, indeterminate)
    return FluentReport(frame.index, entries, frozenset(indeterminate))


def eval_near(
    frame: Frame, epsilon: float = DEFAULT_EPSILON, config: NearConfig | None = None
) -> FluentReport:
    frame = augment_frame(frame)
    cfg = (config or NearConfig()).restricted_to(frame.joints)
    joints = {n: v[None, :] for n, v in frame.joints.items()}
    entries: dict[str, float] = {}
    indeterminate: set[str] = set()
    _near_entries(cfg, near_distances(joints, cfg), 0, epsilon, entries, indeterminate)
    return FluentReport(frame.index, entries, frozenset(indeterminate))


# ---------------------------------------------------------------------------
# Locally temporal fluents


def step_motion_confidence(
    d,
    toward: str,
    epsilon: float = DEFAULT_EPSILON,
    tau: float = TEMPORAL_ANGLE_TAU,
    delta: float = TEMPORAL_ANGLE_DELTA,
):
    """Confidence that a single frame-to-frame change ``d`` is motion ``toward``
    ``"increasing"`` or ``"decreasing"`` values."""
    if toward == "increasing":
        spec = TransitionSpec(abs(tau), delta, UPPER)
    elif toward == "decreasing":
        spec = TransitionSpec(-abs(tau), delta, LOWER)
    else:
        raise ValueError(f"toward must be 'increasing' or 'decreasing', got {toward!r}")
    return transition_confidence(d, spec, epsilon)


def _directions(first_moves_down: bool) -> tuple[str, str]:
    return ("decreasing", "increasing") if first_moves_down else ("increasing", "decreasing")


def temporal_confidences(
    history: Sequence[float],
    first_moves_down: bool = True,
    epsilon: float = DEFAULT_EPSILON,
    tau: float = TEMPORAL_ANGLE_TAU,
    delta: float = TEMPORAL_ANGLE_DELTA,
) -> tuple[float, float, float]:
    """(toward first, toward last, no motion) from the last ``r + 1`` measurements.

    Each step confidence is raised to ``1 / age`` so the newest change counts most.
    """
    h = np.asarray(history, dtype=float)
    if h.size < 2:
        raise ValueError("need at least two measurements")
    diffs = np.diff(h)
    ages = np.arange(diffs.size, 0, -1, dtype=float)  # oldest change first
    out = []
    for toward in _directions(first_moves_down):
        steps = step_motion_confidence(diffs, toward, epsilon, tau, delta)
        out.append(float(np.prod(np.power(steps, 1.0 / ages))))
    c_first, c_last = out
    return c_first, c_last, (1.0 - c_first) * (1.0 - c_last)


def eval_temporal(
    window: "TemporalWindow | Sequence[float]",
    fluent: FluentSpec,
    epsilon: float = DEFAULT_EPSILON,
) -> dict[str, float]:
    """Temporal state confidences keyed ``"<id>:<state>"``; empty without full history."""
    if isinstance(window, TemporalWindow):
        if not window.ready:
            return {}
        history = window.history
    else:
        history = list(window)
    values = temporal_confidences(
        history, fluent.first_moves_down, epsilon, fluent.temporal_tau, fluent.temporal_delta
    )
    return {f"{fluent.id}:{s}": c for s, c in zip(fluent.temporal_states, values)}


class TemporalWindow:
    """Rolling history of the last ``r + 1`` valid measurements of one fluent.

    Pushing ``None`` (an indeterminate measurement) clears the history.
    """

    def __init__(self, r: int = DEFAULT_WINDOW):
        if r < 1:
            raise ValueError("window size must be at least 1")
        self.r = r
        self._buf: deque[float] = deque(maxlen=r + 1)

    def push(self, value: float | None) -> None:
        if value is None or not math.isfinite(value):
            self._buf.clear()
        else:
            self._buf.append(float(value))

    @property
    def ready(self) -> bool:
        return len(self._buf) == self.r + 1

    @property
    def history(self) -> list[float]:
        return list(self._buf)


def _temporal_series(values, valid, first_moves_down, epsilon, r, tau, delta):
    """Vectorized temporal confidences over a whole series: (n, 3) with NaN when undefined."""
    n = values.shape[0]
    out = np.full((n, 3), np.nan)
    if n < r + 1:
        return out
    diffs = np.diff(values)
    step_ok = valid[1:] & valid[:-1]
    # run length of consecutive valid steps ending at each step
    run = np.zeros(n - 1, dtype=int)
    count = 0
    for i, ok in enumerate(step_ok):
        count = count + 1 if ok else 0
        run[i] = count
    cols = []
    for toward in _directions(first_moves_down):
        steps = step_motion_confidence(np.where(step_ok, diffs, 0.0), toward, epsilon, tau, delta)
        steps = np.atleast_1d(steps)
        acc = np.ones(n - r)
        for age in range(1, r + 1):
            # step ending at frame f - age + 1 has index f - age
            acc = acc * np.power(steps[r - age: n - age], 1.0 / age)
        cols.append(acc)
    ready = run[r - 1:] >= r
    first, last = cols
    block = np.stack([first, last, (1.0 - first) * (1.0 - last)], axis=1)
    out[r:] = np.where(ready[:, None], block, np.nan)
    return out


# ---------------------------------------------------------------------------
# Stream driver


@dataclass(frozen=True)
class FluentStream:
    reports: tuple[FluentReport, ...]
    timestamps: np.ndarray
    series: Mapping[str, tuple[np.ndarray, np.ndarray]]
    headlength: np.ndarray

    def __len__(self) -> int:
        return len(self.reports)

    def __iter__(self):
        return iter(self.reports)

    def __getitem__(self, i):
        return self.reports[i]


def fluent_stream(
    seq: PoseSequence,
    registry: Sequence[FluentSpec] | None = None,
    epsilon: float = DEFAULT_EPSILON,
    near: NearConfig | None = None,
    r: int = DEFAULT_WINDOW,
) -> FluentStream:
    """Fluent reports for every frame, plus the raw measurement series.

    ``series`` maps each angle fluent id to ``(radians, valid)`` and each Near id to
    ``(headlengths, valid)``.
    """
    registry = default_registry() if registry is None else tuple(registry)
    if len(seq) == 0:
        return FluentStream((), np.zeros(0), {}, np.zeros(0))
    joints = seq.joint_arrays()
    near = (near or NearConfig()).restricted_to(joints)
    series = measure_all(joints, registry)
    dist = near_distances(joints, near)
    hl = headlength_from(joints["neck"], joints["mid-ear"])

    temporal = {}
    for spec in registry:
        values, valid = series[spec.id]
        temporal[spec.id] = (
            [f"{spec.id}:{s}" for s in spec.temporal_states],
            _temporal_series(values, valid, spec.first_moves_down, epsilon, r,
                             spec.temporal_tau, spec.temporal_delta),
        )
    for fid, (_, rel, ok) in dist.items():
        temporal[fid] = (
            [f"{fid}:{s}" for s in near.temporal_states],
            _temporal_series(rel, ok, True, epsilon, r, near.temporal_tau, near.temporal_delta),
        )

    reports = []
    for i, frame in enumerate(seq.frames):
        entries: dict[str, float] = {}
        indeterminate: set[str] = set()
        _instantaneous_entries(registry, series, i, epsilon, entries, indeterminate)
        _near_entries(near, dist, i, epsilon, entries, indeterminate)
        for keys, block in temporal.values():
            row = block[i]
            if not np.isnan(row[0]):
                for k, c in zip(keys, row):
                    entries[k] = float(c)
        reports.append(FluentReport(frame.index, entries, frozenset(indeterminate)))

    all_series = dict(series)
    for fid, (_, rel, ok) in dist.items():
        all_series[fid] = (rel, ok)
    return FluentStream(tuple(reports), seq.timestamps, all_series, hl)


# ---------------------------------------------------------------------------
# Config files


def _transition_record(tr: TransitionSpec) -> dict:
    return {"state": tr.state, "tau": tr.tau, "delta": tr.delta, "direction": tr.direction}


def default_config() -> dict:
    """The default thresholds as a config document (the format :func:`load_fluent_config` reads)."""
    doc: dict = {spec.id: [_transition_record(t) for t in spec.transitions] for spec in default_registry()}
    cfg = NearConfig()
    doc["near"] = {
        "tau": cfg.near.tau, "delta": cfg.near.delta, "touching": cfg.touching,
        "temporal_tau": cfg.temporal_tau, "temporal_delta": cfg.temporal_delta,
    }
    doc["window"] = DEFAULT_WINDOW
    return doc


def load_fluent_config(
    source: str | Path | Mapping | None,
) -> tuple[tuple[FluentSpec, ...], NearConfig, int]:
    """Apply a config document on top of the defaults -> (registry, near config, r).

    Each fluent key maps to one ``{tau, delta, direction[, state]}`` object or a
    list of them; overrides are matched by ``state`` when given, else by position.
    """
    if source is None:
        doc: Mapping = {}
    elif isinstance(source, Mapping):
        doc = source
    else:
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise FluentConfigError(f"cannot read fluent config {source}: {exc}") from None
    if not isinstance(doc, Mapping):
        raise FluentConfigError("fluent config must be a mapping")

    registry = {s.id: s for s in default_registry()}
    near = NearConfig()
    r = DEFAULT_WINDOW
    for key, value in doc.items():
        if key == "window":
            if not isinstance(value, int) or value < 1:
                raise FluentConfigError(f"window must be a positive integer, got {value!r}")
            r = value
        elif key == "near":
            near = _near_override(near, value)
        elif key in registry:
            registry[key] = _spec_override(registry[key], value)
        else:
            raise FluentConfigError(f"unknown fluent {key!r}")
    return tuple(registry.values()), near, r


def _spec_override(spec: FluentSpec, value) -> FluentSpec:
    items = value if isinstance(value, list) else [value]
    transitions = list(spec.transitions)
    for pos, item in enumerate(items):
        if not isinstance(item, Mapping):
            raise FluentConfigError(f"{spec.id}: transition entries must be mappings")
        idx = pos
        if "state" in item and item["state"]:
            names = [t.state for t in transitions]
            if item["state"] not in names:
                raise FluentConfigError(f"{spec.id}: no transition for state {item['state']!r}")
            idx = names.index(item["state"])
        if idx >= len(transitions):
            raise FluentConfigError(f"{spec.id}: too many transitions")
        old = transitions[idx]
        try:
            transitions[idx] = TransitionSpec(
                float(item.get("tau", old.tau)),
                float(item.get("delta", old.delta)),
                item.get("direction", old.direction),
                old.state,
            )
        except (TypeError, ValueError) as exc:
            raise FluentConfigError(f"{spec.id}: {exc}") from None
    return replace(spec, transitions=tuple(transitions))


def _near_override(near: NearConfig, value) -> NearConfig:
    if not isinstance(value, Mapping):
        raise FluentConfigError("'near' must be a mapping")
    try:
        tr = TransitionSpec(float(value.get("tau", near.near.tau)),
                            float(value.get("delta", near.near.delta)), LOWER, "near")
        return replace(
            near,
            near=tr,
            touching=float(value.get("touching", near.touching)),
            temporal_tau=float(value.get("temporal_tau", near.temporal_tau)),
            temporal_delta=float(value.get("temporal_delta", near.temporal_delta)),
        )
    except (TypeError, ValueError) as exc:
        raise FluentConfigError(f"near: {exc}") from None
