"""Qualitative motion primitives.

A window of one measurement series (usually a joint angle) is modelled as

    d theta / dt  =  sum_j  lambda_j * phi_j(t)

over the fixed library ``1, t, cos(2 pi t/T), sin(2 pi t/T), cos(pi t/T), sin(pi t/T)``.
The coefficients come from sequentially thresholded least squares; the period
``T`` is picked from a grid by residual plus a per-term penalty. Action
Description Database (ADD) entries are threshold predicates over the fitted
models.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fluents import FluentSpec, NearConfig, default_registry, measure_all, near_distances
from .geometry import vector_angles
from .skeleton import PoseSequence, headlength_from

N_BASIS = 6
BASIS_NAMES = ("1", "t", "cos(2pi t/T)", "sin(2pi t/T)", "cos(pi t/T)", "sin(pi t/T)")


class ADDConfigError(ValueError):
    pass


def default_period_grid() -> tuple[float, ...]:
    return tuple(float(x) for x in np.geomspace(0.25, 8.0, 24))


@dataclass(frozen=True)
class RegressionConfig:
    alpha: float = 0.2
    stls_threshold: float = 0.1
    stls_iterations: int = 10
    period_grid: tuple[float, ...] = field(default_factory=default_period_grid)

    def __post_init__(self):
        if self.alpha < 0 or not self.stls_threshold > 0 or self.stls_iterations < 1:
            raise ValueError("need alpha >= 0, stls_threshold > 0, stls_iterations >= 1")
        if not self.period_grid or min(self.period_grid) <= 0:
            raise ValueError("period grid must be non-empty and positive")


@dataclass(frozen=True)
class AngleSeries:
    fluent_id: str
    t: np.ndarray
    theta: np.ndarray
    window: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.t.shape != self.theta.shape or self.t.ndim != 1:
            raise ValueError("t and theta must be 1-D arrays of equal length")

    @property
    def dt(self) -> float:
        return float(np.mean(np.diff(self.t)))


@dataclass(frozen=True)
class QMPModel:
    fluent_id: str
    coefficients: np.ndarray
    period: float
    residual: float
    window: tuple[int, int] = (0, 0)

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self.coefficients))

    @property
    def osc_amplitude(self) -> float:
        """Amplitude of the stronger sinusoid pair (whole or half period)."""
        c = self.coefficients
        return float(max(math.hypot(c[2], c[3]), math.hypot(c[4], c[5])))

    @property
    def osc_period(self) -> float:
        c = self.coefficients
        return self.period if math.hypot(c[2], c[3]) >= math.hypot(c[4], c[5]) else 2.0 * self.period

    def quantity(self, name: str) -> float:
        if name.startswith("lambda_"):
            k = int(name.split("_", 1)[1])
            if not 1 <= k <= N_BASIS:
                raise KeyError(name)
            return float(self.coefficients[k - 1])
        if name in ("osc_amplitude", "osc_period", "period", "residual", "sparsity"):
            return float(getattr(self, name))
        raise KeyError(name)

    def to_record(self) -> dict:
        return {
            "fluent": self.fluent_id,
            "window": list(self.window),
            "T": self.period,
            "lambda": [float(x) for x in self.coefficients],
            "residual": self.residual,
        }


# Five-point stencils (fourth order) for the first two samples; the last two mirror them.
_EDGE_STENCILS = np.array([[-25.0, 48.0, -36.0, 16.0, -3.0], [-3.0, -10.0, 18.0, -6.0, 1.0]]) / 12.0


def estimate_derivative(series: AngleSeries) -> np.ndarray:
    """Finite-difference derivative.

    Uniformly sampled series of five or more samples get fourth-order stencils:
    central inside, one-sided at the ends. Anything else falls back to
    second-order differences (``np.gradient``).
    """
    th, t = series.theta, series.t
    if th.size < 3:
        raise ValueError("need at least 3 samples to estimate a derivative")
    d = np.gradient(th, t, edge_order=2)
    steps = np.diff(t)
    if th.size < 5 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        return d
    h = (t[-1] - t[0]) / (t.size - 1)
    d[2:-2] = (th[:-4] - 8.0 * th[1:-3] + 8.0 * th[3:-1] - th[4:]) / (12.0 * h)
    d[:2] = _EDGE_STENCILS @ th[:5] / h
    d[-2:] = -(_EDGE_STENCILS @ th[-5:][::-1])[::-1] / h
    return d


def basis_matrix(t, period: float) -> np.ndarray:
    if not period > 0:
        raise ValueError("period must be positive")
    t = np.asarray(t, dtype=float)
    w = 2.0 * np.pi * t / period
    return np.stack(
        [np.ones_like(t), t, np.cos(w), np.sin(w), np.cos(w / 2), np.sin(w / 2)], axis=-1
    )


def stls_fit(dtheta, phi, config: RegressionConfig | None = None) -> np.ndarray:
    """Sequentially thresholded least squares.

    Rank-deficient active sets use the minimum-norm solution.
    """
    config = config or RegressionConfig()
    y = np.asarray(dtheta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if phi.shape[0] != y.shape[0]:
        raise ValueError("basis rows must match derivative samples")
    active = np.ones(phi.shape[1], dtype=bool)
    coef = np.zeros(phi.shape[1])
    for _ in range(config.stls_iterations):
        coef = np.zeros(phi.shape[1])
        if active.any():
            coef[active] = np.linalg.lstsq(phi[:, active], y, rcond=None)[0]
        keep = active & (np.abs(coef) >= config.stls_threshold)
        coef[~keep] = 0.0
        if np.array_equal(keep, active):
            break
        active = keep
    return coef


def characterize(
    series: AngleSeries,
    config: RegressionConfig | None = None,
    derivative: np.ndarray | None = None,
) -> QMPModel:
    """Fit every period in the grid and keep the best-scoring model.

    Score is RMS residual on the derivative plus ``alpha`` per nonzero term; ties
    go to the smaller period. Time is measured from the window start.
    """
    config = config or RegressionConfig()
    dtheta = estimate_derivative(series) if derivative is None else np.asarray(derivative, float)
    t = series.t - series.t[0]
    best = None
    for T in sorted(config.period_grid):
        phi = basis_matrix(t, T)
        coef = stls_fit(dtheta, phi, config)
        residual = float(np.sqrt(np.mean((dtheta - phi @ coef) ** 2)))
        score = residual + config.alpha * np.count_nonzero(coef)
        if best is None or score < best[0]:
            best = (score, coef, T, residual)
    _, coef, T, residual = best
    coef = coef.copy()
    coef.setflags(write=False)
    return QMPModel(series.fluent_id, coef, float(T), residual, series.window)


# ---------------------------------------------------------------------------
# Series extraction and windowing

AUXILIARY_SERIES = ("neck height", "ankle separation", "trunk inclination")


@dataclass(frozen=True)
class MotionSeries:
    """Per-frame measurement series of a sequence: id -> (values, valid)."""

    t: np.ndarray
    frame_rate: float
    values: Mapping[str, tuple[np.ndarray, np.ndarray]]

    def __contains__(self, key: str) -> bool:
        return key in self.values

    def window(self, fluent_id: str, start: int, stop: int) -> AngleSeries | None:
        """The series restricted to frames ``[start, stop)``; None if any sample is invalid."""
        if fluent_id not in self.values:
            return None
        v, ok = self.values[fluent_id]
        if stop - start < 3 or not np.all(ok[start:stop]):
            return None
        return AngleSeries(fluent_id, self.t[start:stop], v[start:stop], (start, stop))


def motion_series(
    seq: PoseSequence,
    registry: Sequence[FluentSpec] | None = None,
    near: NearConfig | None = None,
) -> MotionSeries:
    """Fluent measurement series plus a few whole-body series.

    Near distances (in headlengths) are included only when ``near`` is given.
    Auxiliary series (y is up, lengths in median headlengths of the clip):
    ``neck height``, ``ankle separation`` and ``trunk inclination`` (radians
    between mid-hip->neck and vertical).
    """
    registry = default_registry() if registry is None else tuple(registry)
    if not len(seq):
        return MotionSeries(np.zeros(0), seq.frame_rate, {})
    j = seq.joint_arrays()
    values = dict(measure_all(j, registry))
    if near is not None:
        for fid, (_, rel, ok) in near_distances(j, near.restricted_to(j)).items():
            values[fid] = (rel, ok)
    hl = headlength_from(j["neck"], j["mid-ear"])
    unit = float(np.median(hl)) if np.any(hl > 0) else 0.0
    ok = np.full(len(seq), unit > 0)
    scale = unit if unit > 0 else 1.0
    values["neck height"] = (j["neck"][:, 1] / scale, ok)
    values["ankle separation"] = (np.linalg.norm(j["left ankle"] - j["right ankle"], axis=-1) / scale, ok)
    up = np.broadcast_to([0.0, 1.0, 0.0], j["neck"].shape)
    values["trunk inclination"] = vector_angles(j["neck"] - j["mid-hip"], up, scale=scale)
    return MotionSeries(seq.timestamps, seq.frame_rate, values)


def window_bounds(n_frames: int, frame_rate: float, window: float = 3.0, hop: float = 1.0):
    """Half-open frame ranges of a sliding window (seconds). Short clips give one window."""
    size = max(3, int(round(window * frame_rate)))
    step = max(1, int(round(hop * frame_rate)))
    if n_frames < 3:
        return []
    if n_frames <= size:
        return [(0, n_frames)]
    return [(s, s + size) for s in range(0, n_frames - size + 1, step)]


def characterize_window(
    motion: MotionSeries,
    fluent_ids: Iterable[str],
    start: int,
    stop: int,
    config: RegressionConfig | None = None,
) -> dict[str, QMPModel]:
    models = {}
    for fid in fluent_ids:
        s = motion.window(fid, start, stop)
        if s is not None:
            models[fid] = characterize(s, config)
    return models


# ---------------------------------------------------------------------------
# Action Description Database

_QUANTITIES = {f"lambda_{k}" for k in range(1, N_BASIS + 1)} | {
    "osc_amplitude", "osc_period", "period", "residual", "sparsity",
}
_OPS = ("<=", ">=", "in_range")


@dataclass(frozen=True)
class Condition:
    quantity: str
    op: str
    value: float | tuple[float, float]

    def __post_init__(self):
        if self.quantity not in _QUANTITIES:
            raise ADDConfigError(f"unknown quantity {self.quantity!r}")
        if self.op not in _OPS:
            raise ADDConfigError(f"unknown operator {self.op!r}")
        if self.op == "in_range":
            lo, hi = self.value
            if not lo < hi:
                raise ADDConfigError("in_range needs lo < hi")

    def slack(self, x: float) -> float:
        """Signed slack normalized by the threshold scale; >= 0 means satisfied."""
        if self.op == "in_range":
            lo, hi = self.value
            return min(x - lo, hi - x) / ((hi - lo) / 2.0)
        v = float(self.value)
        scale = abs(v) if v != 0 else 1.0
        return (x - v) / scale if self.op == ">=" else (v - x) / scale

    def describe(self) -> str:
        if self.op == "in_range":
            return f"{self.quantity} in [{self.value[0]:g}, {self.value[1]:g}]"
        return f"{self.quantity} {self.op} {self.value:g}"


@dataclass(frozen=True)
class ADDEntry:
    name: str
    fluent_id: str
    conditions: tuple[Condition, ...]
    weight: int = 5

    def __post_init__(self):
        if not isinstance(self.weight, int) or not 1 <= self.weight <= 10:
            raise ADDConfigError(f"{self.name}: weight must be an integer in 1..10")
        if not self.conditions:
            raise ADDConfigError(f"{self.name}: needs at least one condition")


@dataclass(frozen=True)
class ADDResult:
    satisfied: bool
    score: float
    observed: Mapping[str, float] = field(default_factory=dict)


def evaluate_add(models: Mapping[str, QMPModel], add: Sequence[ADDEntry]) -> dict[str, ADDResult]:
    """Score every entry independently; a missing series scores -1."""
    out = {}
    for entry in add:
        model = models.get(entry.fluent_id)
        if model is None:
            out[entry.name] = ADDResult(False, -1.0)
            continue
        observed = {c.quantity: model.quantity(c.quantity) for c in entry.conditions}
        margin = min(c.slack(observed[c.quantity]) for c in entry.conditions)
        out[entry.name] = ADDResult(margin >= 0.0, float(margin), observed)
    return out


def _osc(fid, name, lo=None, hi=None, weight=5, extra=()):
    conds = []
    if lo is not None:
        conds.append(Condition("osc_amplitude", ">=", lo))
    if hi is not None:
        conds.append(Condition("osc_amplitude", "<=", hi))
    return ADDEntry(name, fid, tuple(conds) + tuple(extra), weight)


def default_add() -> tuple[ADDEntry, ...]:
    """Hand-built entries for the four exercises; thresholds are in the series'
    derivative units (rad/s, or headlengths/s for distances and heights)."""
    return (
        _osc("left leg bent", "knee oscillation", lo=1.0, weight=10),
        _osc("neck height", "synchronized shoulder translation", lo=0.8, weight=8),
        _osc("ankle separation", "consistent leg distance", hi=0.5, weight=6,
             extra=(Condition("lambda_1", "in_range", (-0.5, 0.5)),)),
        _osc("left arm bent", "elbow oscillation", lo=1.0, weight=10),
        _osc("trunk inclination", "hip-hinge tilt", lo=0.75, weight=9),
        _osc("left arm raised", "arm-raise oscillation", lo=3.0, weight=10),
        _osc("ankle separation", "leg-spread oscillation", lo=1.0, weight=7),
        _osc("left leg bent", "steady knee angle", hi=0.5, weight=4),
    )


def add_to_records(add: Sequence[ADDEntry]) -> list[dict]:
    return [
        {
            "name": e.name,
            "fluent_id": e.fluent_id,
            "weight": e.weight,
            "conditions": [
                {"quantity": c.quantity, "op": c.op,
                 **({"values": list(c.value)} if c.op == "in_range" else {"value": c.value})}
                for c in e.conditions
            ],
        }
        for e in add
    ]


def add_from_records(records) -> tuple[ADDEntry, ...]:
    if isinstance(records, Mapping):
        records = records.get("entries", None)
    if not isinstance(records, list):
        raise ADDConfigError("ADD document must be a list of entries or {'entries': [...]}")
    entries = []
    for rec in records:
        try:
            conds = []
            for c in rec["conditions"]:
                value = tuple(float(v) for v in c["values"]) if c["op"] == "in_range" else float(c["value"])
                conds.append(Condition(c["quantity"], c["op"], value))
            entries.append(ADDEntry(rec["name"], rec["fluent_id"], tuple(conds), rec.get("weight", 5)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ADDConfigError):
                raise
            raise ADDConfigError(f"bad ADD entry {rec!r}: {exc}") from None
    names = [e.name for e in entries]
    if len(set(names)) != len(names):
        raise ADDConfigError("ADD entry names must be unique")
    return tuple(entries)


def load_add(path: str | Path | None) -> tuple[ADDEntry, ...]:
    if path is None:
        return default_add()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ADDConfigError(f"cannot read ADD file {path}: {exc}") from None
    return add_from_records(doc)


def referenced_series(add: Sequence[ADDEntry]) -> list[str]:
    seen: list[str] = []
    for e in add:
        if e.fluent_id not in seen:
            seen.append(e.fluent_id)
    return seen


def series_ids(registry: Sequence[FluentSpec] | None = None) -> list[str]:
    reg = default_registry() if registry is None else registry
    return [s.id for s in reg] + list(AUXILIARY_SERIES)
