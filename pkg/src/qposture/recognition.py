"""Activity recognition: weighted ADD criteria (DAD) and a case-based reasoner (CBR).

DAD scores every configured activity on every window as the weighted fraction
of its criteria that the window's ADD evaluation satisfied. CBR stores
(problem, solution) cases whose problems are vectors of discrete feature
values and classifies by match count.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fluents import FluentSpec, default_registry, measure_all
from .qmp import (
    ADDEntry,
    ADDResult,
    RegressionConfig,
    characterize_window,
    default_add,
    evaluate_add,
    motion_series,
    referenced_series,
    window_bounds,
)
from .skeleton import PoseSequence


class ActivityConfigError(ValueError):
    pass


class CaseBaseError(ValueError):
    pass


# ---------------------------------------------------------------------------
# DAD


@dataclass(frozen=True)
class ActivityDefinition:
    """Named activity: ordered (ADD entry, weight) criteria plus optional onset order.

    ``sequence`` holds pairs ``(a, b)`` meaning criterion ``a`` must start no
    later than criterion ``b``.
    """

    name: str
    criteria: tuple[tuple[str, int], ...]
    sequence: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if len(self.criteria) < 2:
            raise ActivityConfigError(f"{self.name}: an activity needs at least two criteria")
        names = [c for c, _ in self.criteria]
        if len(set(names)) != len(names):
            raise ActivityConfigError(f"{self.name}: duplicate criterion")
        for c, w in self.criteria:
            if not isinstance(w, int) or isinstance(w, bool) or not 1 <= w <= 10:
                raise ActivityConfigError(f"{self.name}: weight of {c!r} must be an integer in 1..10")
        for a, b in self.sequence:
            if a not in names or b not in names:
                raise ActivityConfigError(f"{self.name}: sequence constraint ({a}, {b}) names an unknown criterion")

    @property
    def total_weight(self) -> int:
        return sum(w for _, w in self.criteria)


@dataclass(frozen=True)
class CriterionOutcome:
    name: str
    weight: int
    satisfied: bool
    score: float
    observed: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ActivityScore:
    activity: str
    ratio: float
    ordered: bool
    satisfied: tuple[str, ...]
    unsatisfied: tuple[str, ...]
    details: tuple[CriterionOutcome, ...] = ()

    def to_record(self) -> dict:
        return {
            "activity": self.activity,
            "ratio": self.ratio,
            "ordered": self.ordered,
            "satisfied": list(self.satisfied),
            "unsatisfied": list(self.unsatisfied),
        }


def default_activities() -> tuple[ActivityDefinition, ...]:
    return (
        ActivityDefinition("squat", (
            ("knee oscillation", 10),
            ("synchronized shoulder translation", 8),
            ("consistent leg distance", 6),
        )),
        ActivityDefinition("push-up", (
            ("elbow oscillation", 10),
            ("synchronized shoulder translation", 6),
            ("consistent leg distance", 4),
            ("steady knee angle", 4),
        )),
        ActivityDefinition("jumping jack", (
            ("arm-raise oscillation", 10),
            ("leg-spread oscillation", 8),
        )),
        ActivityDefinition("single-leg romanian deadlift", (
            ("hip-hinge tilt", 10),
            ("steady knee angle", 5),
            ("leg-spread oscillation", 3),
        )),
    )


def check_activities(defs: Sequence[ActivityDefinition], add: Sequence[ADDEntry]) -> None:
    """Raise if an activity refers to an ADD entry that does not exist."""
    known = {e.name for e in add}
    names = [d.name for d in defs]
    if len(set(names)) != len(names):
        raise ActivityConfigError("activity names must be unique")
    for d in defs:
        missing = [c for c, _ in d.criteria if c not in known]
        if missing:
            raise ActivityConfigError(f"{d.name}: unknown ADD entries {missing}")


def dad_score(
    add_results: Mapping[str, ADDResult],
    defs: Sequence[ActivityDefinition],
    onsets: Mapping[str, float] | None = None,
) -> list[ActivityScore]:
    """Score every activity on one window's ADD results; nothing is dropped.

    ``onsets`` maps criterion names to the time they first became satisfied.
    A sequence constraint counts as met only when both onsets are known and in
    order; activities without constraints are always ``ordered``.
    """
    scores = []
    for d in defs:
        details = []
        for name, w in d.criteria:
            res = add_results.get(name, ADDResult(False, -1.0))
            details.append(CriterionOutcome(name, w, bool(res.satisfied), float(res.score), dict(res.observed)))
        got = sum(o.weight for o in details if o.satisfied)
        ordered = True
        for a, b in d.sequence:
            if onsets is None or a not in onsets or b not in onsets or onsets[a] > onsets[b]:
                ordered = False
        scores.append(ActivityScore(
            d.name,
            got / d.total_weight,
            ordered,
            tuple(o.name for o in details if o.satisfied),
            tuple(o.name for o in details if not o.satisfied),
            tuple(details),
        ))
    return scores


@dataclass(frozen=True)
class WindowResult:
    start: int
    stop: int
    t_start: float
    models: Mapping
    add_results: Mapping[str, ADDResult]
    scores: tuple[ActivityScore, ...]


def dad_windows(
    seq: PoseSequence,
    add: Sequence[ADDEntry] | None = None,
    defs: Sequence[ActivityDefinition] | None = None,
    *,
    registry: Sequence[FluentSpec] | None = None,
    config: RegressionConfig | None = None,
    window: float = 3.0,
    hop: float = 1.0,
    motion=None,
) -> list[WindowResult]:
    """Sliding-window DAD over a whole sequence.

    Onsets accumulate across windows (start time of the first window in which
    each criterion held), so sequence constraints see the history so far.
    """
    add = default_add() if add is None else tuple(add)
    defs = default_activities() if defs is None else tuple(defs)
    motion = motion_series(seq, registry) if motion is None else motion
    ids = referenced_series(add)
    onsets: dict[str, float] = {}
    out = []
    for start, stop in window_bounds(len(motion.t), motion.frame_rate, window, hop):
        models = characterize_window(motion, ids, start, stop, config)
        results = evaluate_add(models, add)
        t0 = float(motion.t[start])
        for name, res in results.items():
            if res.satisfied and name not in onsets:
                onsets[name] = t0
        scores = dad_score(results, defs, onsets)
        out.append(WindowResult(start, stop, t0, models, results, tuple(scores)))
    return out


def mean_ratios(windows: Sequence[WindowResult]) -> dict[str, float]:
    """Average ratio per activity across windows (one simple aggregation)."""
    if not windows:
        return {}
    acc: dict[str, list[float]] = {}
    for w in windows:
        for s in w.scores:
            acc.setdefault(s.activity, []).append(s.ratio)
    return {k: float(np.mean(v)) for k, v in acc.items()}


# ---------------------------------------------------------------------------
# CBR


@dataclass(frozen=True)
class TrimPolicy:
    novelty_threshold: float = 0.1
    per_label_quota: int = 50

    def __post_init__(self):
        if not 0.0 < self.novelty_threshold <= 1.0:
            raise ActivityConfigError("novelty_threshold must lie in (0, 1]")
        if not isinstance(self.per_label_quota, int) or self.per_label_quota < 1:
            raise ActivityConfigError("per_label_quota must be a positive integer")


@dataclass(frozen=True)
class Case:
    problem: tuple
    solution: str
    source: str = ""
    seq: int = 0

    def to_record(self) -> dict:
        return {"problem": list(self.problem), "solution": self.solution,
                "source": self.source, "seq": self.seq}


@dataclass(frozen=True)
class CaseBase:
    schema: tuple[str, ...]
    cases: tuple[Case, ...] = ()
    policy: TrimPolicy = field(default_factory=TrimPolicy)

    def __post_init__(self):
        m = len(self.schema)
        seen = set()
        for c in self.cases:
            if len(c.problem) != m:
                raise CaseBaseError(f"case {c.seq} has {len(c.problem)} features, schema has {m}")
            key = (c.problem, c.solution)
            if key in seen:
                raise CaseBaseError(f"duplicate case {c.seq}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.cases)

    @property
    def next_seq(self) -> int:
        return max((c.seq for c in self.cases), default=-1) + 1

    def labels(self) -> list[str]:
        return sorted({c.solution for c in self.cases})


def cbr_similarity(p: Sequence, q: Sequence) -> float:
    """Fraction of positions where the two problems agree."""
    if len(p) != len(q):
        raise CaseBaseError(f"schema mismatch: {len(p)} vs {len(q)} features")
    if not len(p):
        return 1.0
    return sum(a == b for a, b in zip(p, q)) / len(p)


@dataclass(frozen=True)
class Classification:
    label: str
    best_case: Case
    similarity: float

    def to_record(self) -> dict:
        return {"label": self.label, "similarity": self.similarity, "best_case": self.best_case.to_record()}


def cbr_classify(problem: Sequence, cb: CaseBase) -> Classification:
    """Label of the most similar case. Ties go to the most recently retained
    case, then to the lexicographically smaller label."""
    if not cb.cases:
        raise CaseBaseError("cannot classify with an empty case base")
    if len(problem) != len(cb.schema):
        raise CaseBaseError(f"schema mismatch: {len(problem)} vs {len(cb.schema)} features")
    best = None
    for c in cb.cases:
        key = (cbr_similarity(problem, c.problem), c.seq, _neg_str(c.solution))
        if best is None or key > best[0]:
            best = (key, c)
    (sim, _, _), case = best
    return Classification(case.solution, case, sim)


class _neg_str(str):
    """String that sorts in reverse, so max() prefers the smaller label."""

    def __lt__(self, other):
        return str.__gt__(self, other)

    def __gt__(self, other):
        return str.__lt__(self, other)


def novelty(problem: Sequence, label: str, cases: Iterable[Case]) -> float:
    """1 minus the best similarity to cases with the same label (1 if there are none)."""
    sims = [cbr_similarity(problem, c.problem) for c in cases if c.solution == label]
    return 1.0 - max(sims, default=0.0)


def cbr_retain(cb: CaseBase, new_case: Case, correct: bool) -> CaseBase:
    """Retain ``new_case`` when it is novel enough or was misclassified.

    Exact duplicates are always rejected. When the label goes over quota the
    least novel of the older same-label cases is evicted (oldest first on ties).
    """
    if len(new_case.problem) != len(cb.schema):
        raise CaseBaseError(f"schema mismatch: {len(new_case.problem)} vs {len(cb.schema)} features")
    if any(c.problem == new_case.problem and c.solution == new_case.solution for c in cb.cases):
        return cb
    nov = novelty(new_case.problem, new_case.solution, cb.cases)
    if nov < cb.policy.novelty_threshold and correct:
        return cb
    added = replace(new_case, problem=tuple(new_case.problem), seq=cb.next_seq)
    cases = list(cb.cases) + [added]
    while sum(c.solution == added.solution for c in cases) > cb.policy.per_label_quota:
        same = [c for c in cases if c.solution == added.solution]
        victims = [c for c in same if c is not added]
        victim = min(victims, key=lambda c: (novelty(c.problem, c.solution, [o for o in same if o is not c]), c.seq))
        cases.remove(victim)
    return replace(cb, cases=tuple(cases))


def cbr_trim_init(
    raw_cases: Sequence[Case],
    policy: TrimPolicy | None = None,
    schema: Sequence[str] | None = None,
) -> CaseBase:
    """Initial case base from a raw corpus, at most ``per_label_quota`` cases per label.

    Identical cases collapse to one. Within a label, cases are picked greedily
    by how much they raise the coverage sum_i max_s sim(i, s) over all raw
    cases of that label (duplicates count with multiplicity), so dense regions
    of the feature space keep proportionally many representatives.
    """
    if not raw_cases:
        raise CaseBaseError("cannot build a case base from an empty corpus")
    policy = policy or TrimPolicy()
    m = len(raw_cases[0].problem)
    schema = tuple(schema) if schema is not None else tuple(f"f{i}" for i in range(m))
    order = {id(c): i for i, c in enumerate(raw_cases)}

    kept: list[Case] = []
    by_label: dict[str, list[Case]] = {}
    for c in raw_cases:
        by_label.setdefault(c.solution, []).append(c)
    for label in sorted(by_label):
        group = by_label[label]
        unique: dict[tuple, Case] = {}
        for c in group:
            unique.setdefault(tuple(c.problem), c)
        cands = list(unique.values())
        if len(cands) <= policy.per_label_quota:
            kept += cands
            continue
        X = np.array([c.problem for c in group], dtype=object)
        C = np.array([c.problem for c in cands], dtype=object)
        sim = np.array([[np.mean(a == b) for b in C] for a in X], dtype=float)  # raw x candidate
        cover = np.zeros(len(group))
        chosen: list[int] = []
        for _ in range(policy.per_label_quota):
            gain = np.maximum(sim, cover[:, None]).sum(axis=0) - cover.sum()
            gain[chosen] = -np.inf
            k = int(np.argmax(gain))
            chosen.append(k)
            cover = np.maximum(cover, sim[:, k])
        kept += [cands[k] for k in chosen]
    kept.sort(key=lambda c: order[id(c)])
    cases = tuple(replace(c, problem=tuple(c.problem), seq=i) for i, c in enumerate(kept))
    return CaseBase(schema, cases, policy)


def leave_one_out_accuracy(cases: Sequence[Case], schema: Sequence[str] | None = None) -> float:
    """Classify each case against all the others."""
    if len(cases) < 2:
        raise CaseBaseError("leave-one-out needs at least two cases")
    schema = tuple(schema) if schema is not None else tuple(f"f{i}" for i in range(len(cases[0].problem)))
    hits = 0
    for i, c in enumerate(cases):
        rest = [replace(o, seq=j) for j, o in enumerate(cases) if j != i]
        # duplicates of other labels may coexist in a raw corpus; dedupe per (problem, label)
        seen, uniq = set(), []
        for o in rest:
            key = (tuple(o.problem), o.solution)
            if key not in seen:
                seen.add(key)
                uniq.append(replace(o, problem=tuple(o.problem)))
        hits += cbr_classify(c.problem, CaseBase(schema, tuple(uniq))).label == c.solution
    return hits / len(cases)



def feature_prevalence(cases: Sequence[Case], label: str) -> dict[tuple[int, object], float]:
    """Fraction of ``label`` cases holding each (feature index, value)."""
    rows = [c.problem for c in cases if c.solution == label]
    out: dict[tuple[int, object], float] = {}
    if not rows:
        return out
    for j in range(len(rows[0])):
        for v, n in Counter(r[j] for r in rows).items():
            out[(j, v)] = n / len(rows)
    return out


def prevalence_difference(raw: Sequence[Case], trimmed: Sequence[Case]) -> dict[str, float]:
    """Per label, mean absolute prevalence difference over every (feature, value) seen."""
    out = {}
    for label in sorted({c.solution for c in raw}):
        a, b = feature_prevalence(raw, label), feature_prevalence(trimmed, label)
        keys = sorted(set(a) | set(b), key=repr)
        out[label] = float(np.mean([abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys])) if keys else 0.0
    return out


# ---------------------------------------------------------------------------
# Features


def _modal_states(values, valid, spec: FluentSpec, epsilon: float) -> str:
    if not np.any(valid):
        return "indeterminate"
    conf = spec.state_confidences(values[valid], epsilon)
    stacked = np.stack([np.atleast_1d(conf[s]) for s in spec.states])
    counts = Counter(int(k) for k in np.argmax(stacked, axis=0))
    best = max(range(len(spec.states)), key=lambda k: (counts.get(k, 0), -k))
    return spec.states[best]


def qmp_features(
    seq: PoseSequence,
    add: Sequence[ADDEntry] | None = None,
    registry: Sequence[FluentSpec] | None = None,
    *,
    config: RegressionConfig | None = None,
    window: float = 3.0,
    hop: float = 1.0,
    epsilon: float = 1e-3,
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """(schema, problem) from ADD outcomes and modal instantaneous states.

    An ADD entry reads "yes" when it holds in at least half of the windows.
    """
    add = default_add() if add is None else tuple(add)
    registry = default_registry() if registry is None else tuple(registry)
    windows = dad_windows(seq, add, (), registry=registry, config=config, window=window, hop=hop)
    schema, problem = [], []
    for e in add:
        hits = sum(w.add_results[e.name].satisfied for w in windows)
        schema.append(f"add:{e.name}")
        problem.append("yes" if windows and 2 * hits >= len(windows) else "no")
    series = measure_all(seq.joint_arrays(), registry)
    for spec in registry:
        values, valid = series[spec.id]
        schema.append(f"state:{spec.id}")
        problem.append(_modal_states(values, valid, spec, epsilon))
    return tuple(schema), tuple(problem)


def fluent_features(
    seq: PoseSequence,
    registry: Sequence[FluentSpec] | None = None,
    epsilon: float = 1e-3,
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """(schema, problem) holding the most confident state of every fluent at every frame."""
    registry = default_registry() if registry is None else tuple(registry)
    series = measure_all(seq.joint_arrays(), registry)
    schema, problem = [], []
    for spec in registry:
        values, valid = series[spec.id]
        conf = spec.state_confidences(np.where(valid, values, 0.0), epsilon)
        idx = np.argmax(np.stack([np.atleast_1d(conf[s]) for s in spec.states]), axis=0)
        for i in range(len(values)):
            schema.append(f"{i}:{spec.id}")
            problem.append(spec.states[idx[i]] if valid[i] else "indeterminate")
    return tuple(schema), tuple(problem)


# ---------------------------------------------------------------------------
# Explanations


def explain_dad(score: ActivityScore, add: Sequence[ADDEntry] | None = None) -> str:
    entries = {e.name: e for e in (add or ())}
    order = "" if score.ordered else ", sequence not confirmed"
    lines = [f"{score.activity}: ratio {score.ratio:.3f}{order}"]
    for o in score.details:
        tag = "match" if o.satisfied else "MISSING"
        obs = ", ".join(f"{k}={v:.3f}" for k, v in sorted(o.observed.items())) or "no data"
        expected = ""
        if o.name in entries:
            e = entries[o.name]
            expected = f"; expected {e.fluent_id}: " + " and ".join(c.describe() for c in e.conditions)
        state = "satisfied" if o.satisfied else "not satisfied"
        lines.append(f"  [{tag}] {o.name} (weight {o.weight}): observed {state} ({obs}){expected}")
    return "\n".join(lines)


def explain_cbr(result: Classification, problem: Sequence, schema: Sequence[str]) -> str:
    c = result.best_case
    src = f" from {c.source}" if c.source else ""
    lines = [f"classified as {result.label}: similarity {result.similarity:.3f} to case {c.seq}{src}"]
    for name, obs, exp in zip(schema, problem, c.problem):
        tag = "match" if obs == exp else "mismatch"
        lines.append(f"  [{tag}] {name}: observed {obs}, expected {exp}")
    return "\n".join(lines)


def explain(result, context=None) -> str:
    """Text explanation of an ActivityScore (context: the ADD) or a
    Classification (context: ``(problem, schema)``)."""
    if isinstance(result, ActivityScore):
        return explain_dad(result, context)
    if isinstance(result, Classification):
        if context is None:
            raise ValueError("a CBR explanation needs (problem, schema) as context")
        problem, schema = context
        return explain_cbr(result, problem, schema)
    raise TypeError(f"cannot explain {type(result).__name__}")


# ---------------------------------------------------------------------------
# Config and persistence


def activities_to_records(defs: Sequence[ActivityDefinition]) -> list[dict]:
    return [
        {
            "name": d.name,
            "criteria": [{"entry": c, "weight": w} for c, w in d.criteria],
            **({"sequence": [list(p) for p in d.sequence]} if d.sequence else {}),
        }
        for d in defs
    ]


def activities_from_records(doc) -> tuple[tuple[ActivityDefinition, ...], TrimPolicy]:
    """Parse ``{"activities": [...], "cbr": {...}}`` (or a bare list of activities)."""
    policy = TrimPolicy()
    if isinstance(doc, Mapping):
        if "cbr" in doc:
            p = doc["cbr"]
            if not isinstance(p, Mapping):
                raise ActivityConfigError("'cbr' must be a mapping")
            unknown = set(p) - {"novelty_threshold", "per_label_quota"}
            if unknown:
                raise ActivityConfigError(f"unknown cbr keys {sorted(unknown)}")
            policy = TrimPolicy(float(p.get("novelty_threshold", policy.novelty_threshold)),
                                p.get("per_label_quota", policy.per_label_quota))
        doc = doc.get("activities", default_activities_records())
    if not isinstance(doc, list):
        raise ActivityConfigError("activities must be a list")
    defs = []
    for rec in doc:
        try:
            crit = tuple((c["entry"], c.get("weight", 5)) for c in rec["criteria"])
            seq = tuple(tuple(p) for p in rec.get("sequence", ()))
            if any(len(p) != 2 for p in seq):
                raise ActivityConfigError(f"{rec.get('name')}: sequence items are [before, after] pairs")
            defs.append(ActivityDefinition(rec["name"], crit, seq))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ActivityConfigError(f"bad activity record {rec!r}: {exc}") from None
    return tuple(defs), policy


def default_activities_records() -> list[dict]:
    return activities_to_records(default_activities())


def load_activities(
    path: str | Path | None, add: Sequence[ADDEntry] | None = None
) -> tuple[tuple[ActivityDefinition, ...], TrimPolicy]:
    if path is None:
        defs, policy = default_activities(), TrimPolicy()
    else:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ActivityConfigError(f"cannot read activity file {path}: {exc}") from None
        defs, policy = activities_from_records(doc)
    check_activities(defs, default_add() if add is None else add)
    return defs, policy


def dump_case_base(cb: CaseBase) -> str:
    header = {"schema": list(cb.schema), "policy": {
        "novelty_threshold": cb.policy.novelty_threshold,
        "per_label_quota": cb.policy.per_label_quota,
    }}
    lines = [json.dumps(header)] + [json.dumps(c.to_record()) for c in cb.cases]
    return "\n".join(lines) + "\n"


def parse_case_records(text: str) -> tuple[tuple[str, ...], TrimPolicy, list[Case]]:
    """Header and cases of a case file without case-base validation (raw corpora
    may hold duplicates)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise CaseBaseError("case base file is empty (a schema header is required)")
    try:
        header = json.loads(lines[0])
        schema = tuple(header["schema"])
        stored = TrimPolicy(**header.get("policy", {}))
        cases = []
        for ln in lines[1:]:
            rec = json.loads(ln)
            cases.append(Case(tuple(rec["problem"]), str(rec["solution"]),
                              str(rec.get("source", "")), int(rec.get("seq", len(cases)))))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CaseBaseError(f"malformed case file: {exc}") from None
    for c in cases:
        if len(c.problem) != len(schema):
            raise CaseBaseError(f"case {c.seq} has {len(c.problem)} features, schema has {len(schema)}")
    return schema, stored, cases


def parse_case_base(text: str, policy: TrimPolicy | None = None) -> CaseBase:
    """Parse the line-delimited case base; ``policy`` overrides the stored one."""
    schema, stored, cases = parse_case_records(text)
    return CaseBase(schema, tuple(cases), policy or stored)


def load_case_base(path: str | Path, policy: TrimPolicy | None = None) -> CaseBase:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CaseBaseError(f"cannot read case base {path}: {exc}") from None
    return parse_case_base(text, policy)
