import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qposture.qmp import ADDResult, default_add
from qposture.recognition import (
    ActivityConfigError,
    ActivityDefinition,
    Case,
    CaseBase,
    CaseBaseError,
    Classification,
    TrimPolicy,
    activities_from_records,
    activities_to_records,
    cbr_classify,
    cbr_retain,
    cbr_similarity,
    cbr_trim_init,
    check_activities,
    dad_score,
    dad_windows,
    default_activities,
    dump_case_base,
    explain,
    fluent_features,
    load_activities,
    parse_case_base,
    prevalence_difference,
    qmp_features,
)
from qposture.synth import MotionSpec, Trajectory, generate_motion, preset

vectors = st.lists(st.sampled_from("abc"), min_size=1, max_size=12)


def _def(weights=(1, 1, 2), seq=()):
    return ActivityDefinition("act", tuple((f"c{i}", w) for i, w in enumerate(weights)), seq)


def _results(satisfied, n=3):
    return {f"c{i}": ADDResult(i in satisfied, 0.5 if i in satisfied else -0.5) for i in range(n)}


# --- DAD --------------------------------------------------------------------------


def test_dad_all_none_and_weighted():
    d = _def()
    (s,) = dad_score(_results({0, 1, 2}), [d])
    assert s.ratio == 1.0 and s.ordered and s.unsatisfied == ()
    (s,) = dad_score(_results(set()), [d])
    assert s.ratio == 0.0
    (s,) = dad_score(_results({2}), [d])
    assert s.ratio == 0.5 and s.satisfied == ("c2",)


@settings(max_examples=100, deadline=None)
@given(weights=st.lists(st.integers(1, 10), min_size=2, max_size=6), data=st.data())
def test_dad_ratio_monotone(weights, data):
    d = _def(tuple(weights))
    n = len(weights)
    sat = data.draw(st.sets(st.integers(0, n - 1)))
    extra = data.draw(st.integers(0, n - 1))
    (a,) = dad_score(_results(sat, n), [d])
    (b,) = dad_score(_results(sat | {extra}, n), [d])
    assert b.ratio >= a.ratio
    assert a.ratio == pytest.approx(sum(weights[i] for i in sat) / sum(weights))


def test_dad_sequence_constraints():
    d = _def(seq=(("c0", "c1"),))
    (s,) = dad_score(_results({0, 1}), [d])
    assert not s.ordered  # no onsets known
    (s,) = dad_score(_results({0, 1}), [d], onsets={"c0": 0.0, "c1": 1.0})
    assert s.ordered
    (s,) = dad_score(_results({0, 1}), [d], onsets={"c0": 2.0, "c1": 1.0})
    assert not s.ordered


def test_activity_definition_validation():
    with pytest.raises(ActivityConfigError):
        ActivityDefinition("a", (("x", 1),))
    with pytest.raises(ActivityConfigError):
        ActivityDefinition("a", (("x", 1), ("y", 11)))
    with pytest.raises(ActivityConfigError):
        ActivityDefinition("a", (("x", 1), ("y", 1)), (("x", "z"),))
    with pytest.raises(ActivityConfigError, match="unknown ADD"):
        check_activities([ActivityDefinition("a", (("x", 1), ("y", 1)))], default_add())
    check_activities(default_activities(), default_add())


def test_activity_records_round_trip(tmp_path):
    defs = default_activities()
    again, policy = activities_from_records({"activities": activities_to_records(defs),
                                             "cbr": {"novelty_threshold": 0.2, "per_label_quota": 7}})
    assert again == defs and policy == TrimPolicy(0.2, 7)
    path = tmp_path / "a.json"
    path.write_text('{"activities": [{"name": "x", "criteria": [{"entry": "nope", "weight": 2}, {"entry": "knee oscillation"}]}]}')
    with pytest.raises(ActivityConfigError):
        load_activities(path)


def test_dad_on_squat_preset(squat_seq):
    windows = dad_windows(squat_seq)
    assert len(windows) == 4
    for w in windows:
        ratios = {s.activity: s.ratio for s in w.scores}
        assert ratios["squat"] == 1.0
        assert len(ratios) == 4  # every activity is reported


def test_explain_dad_full_and_missing(squat_seq):
    w = dad_windows(squat_seq)[0]
    squat = next(s for s in w.scores if s.activity == "squat")
    text = explain(squat, default_add())
    assert text.count("[match]") == 3 and "MISSING" not in text
    assert "ratio 1.000" in text
    # freeze the knees: knee oscillation must be named as missing
    still = generate_motion(MotionSpec({"left knee": Trajectory.constant(2.6), "right knee": Trajectory.constant(2.6),
                                        "pitch": Trajectory.sinusoid(0.12, 0.12, 2.0)}))
    w = dad_windows(still)[0]
    squat = next(s for s in w.scores if s.activity == "squat")
    text = explain(squat, default_add())
    assert squat.ratio < 1.0
    assert "[MISSING] knee oscillation" in text
    assert explain(squat, default_add()) == text


# --- CBR similarity / classify -------------------------------------------------------


@pytest.mark.parametrize("p, q, s", [("abcd", "abcd", 1.0), ("abcd", "bcda", 0.0), ("abcd", "abzz", 0.5)])
def test_similarity_examples(p, q, s):
    assert cbr_similarity(tuple(p), tuple(q)) == s


@settings(max_examples=200, deadline=None)
@given(data=st.data(), p=vectors)
def test_similarity_properties(data, p):
    q = data.draw(st.lists(st.sampled_from("abc"), min_size=len(p), max_size=len(p)))
    assert cbr_similarity(p, q) == cbr_similarity(q, p)
    assert cbr_similarity(p, p) == 1.0
    hamming = sum(a != b for a, b in zip(p, q))
    assert cbr_similarity(p, q) == pytest.approx(1 - hamming / len(p))


def test_similarity_schema_mismatch():
    with pytest.raises(CaseBaseError):
        cbr_similarity(("a",), ("a", "b"))


def _cb(*cases, policy=TrimPolicy()):
    m = len(cases[0][0]) if cases else 2
    return CaseBase(tuple(f"f{i}" for i in range(m)),
                    tuple(Case(tuple(p), lab, seq=i) for i, (p, lab) in enumerate(cases)), policy)


def test_classify_examples():
    cb = _cb(("ab", "squat"))
    assert cbr_classify(tuple("zz"), cb).label == "squat"
    cb = _cb(("ab", "squat"), ("cd", "push-up"))
    res = cbr_classify(tuple("cd"), cb)
    assert res.label == "push-up" and res.similarity == 1.0
    # tie: "ad" matches both in one position -> most recently retained wins
    assert cbr_classify(tuple("ad"), cb).label == "push-up"
    with pytest.raises(CaseBaseError):
        cbr_classify(tuple("ab"), _cb())


def test_classify_tie_lexicographic():
    cb = CaseBase(("f0",), (Case(("a",), "zeta", seq=3), Case(("b",), "alpha", seq=3)))
    assert cbr_classify(("c",), cb).label == "alpha"


def test_case_base_rejects_duplicates_and_bad_width():
    with pytest.raises(CaseBaseError):
        _cb(("ab", "x"), ("ab", "x"))
    with pytest.raises(CaseBaseError):
        CaseBase(("f0",), (Case(("a", "b"), "x"),))


# --- retention -----------------------------------------------------------------------


def test_retain_duplicate_rejected():
    cb = _cb(("abcd", "squat"))
    assert cbr_retain(cb, Case(tuple("abcd"), "squat"), correct=False) is cb


def test_retain_benefit_branch():
    cb = _cb(("abcdefghij", "squat"), ("zzzzzzzzzz", "push-up"))
    close = Case(tuple("abcdefghiy"), "squat")  # novelty 0.1
    strict = CaseBase(cb.schema, cb.cases, TrimPolicy(novelty_threshold=0.5))
    assert cbr_retain(strict, close, correct=True) is strict
    out = cbr_retain(strict, close, correct=False)
    assert len(out) == 3 and out.cases[-1].seq == 2


def test_retain_quota_evicts_least_novel():
    policy = TrimPolicy(novelty_threshold=0.1, per_label_quota=3)
    cb = _cb(("aaaa", "s"), ("aaab", "s"), ("dddd", "s"), ("zzzz", "p"), policy=policy)
    new = Case(tuple("cccc"), "s")
    out = cbr_retain(cb, new, correct=True)
    problems = {c.problem for c in out.cases if c.solution == "s"}
    assert len(problems) == 3 and tuple("cccc") in problems
    # aaaa and aaab are each other's nearest neighbour; the older one goes
    assert tuple("aaaa") not in problems and tuple("aaab") in problems


def test_retained_miss_becomes_correct():
    rng = np.random.default_rng(0)
    protos = {lab: rng.choice(list("abc"), size=12) for lab in ("x", "y", "z")}

    def sample(lab):
        p = protos[lab].copy()
        flip = rng.random(12) < 0.25
        p[flip] = rng.choice(list("abc"), size=flip.sum())
        return tuple(p)

    cb = _cb(*[(sample(lab), lab) for lab in ("x", "y", "z") for _ in range(3)])
    for _ in range(30):
        lab = str(rng.choice(["x", "y", "z"]))
        case = Case(sample(lab), lab)
        correct = cbr_classify(case.problem, cb).label == lab
        new = cbr_retain(cb, case, correct)
        if not correct and new is not cb:
            # the misclassified case itself is now classified correctly
            assert cbr_classify(case.problem, new).label == lab
        cb = new


# --- trimming -------------------------------------------------------------------------


def test_trim_identity_under_quota():
    cases = [Case(tuple(p), lab) for p, lab in (("ab", "s"), ("cd", "s"), ("ef", "p"))]
    cb = cbr_trim_init(cases, TrimPolicy(per_label_quota=5))
    assert len(cb) == 3


def test_trim_near_duplicates_prevalence():
    rng = np.random.default_rng(1)
    base = np.array(list("aaaaabbbbb"))
    raw = []
    for i in range(100):
        p = base.copy()
        k = rng.integers(10)
        p[k] = rng.choice(list("abc"))
        raw.append(Case(tuple(p), "squat", f"s{i}"))
    cb = cbr_trim_init(raw, TrimPolicy(per_label_quota=10))
    assert len(cb) == 10
    assert prevalence_difference(raw, cb.cases)["squat"] <= 0.1


def test_trim_per_label_quota_limits_imbalance():
    rng = np.random.default_rng(2)
    raw = [Case(tuple(rng.choice(list("ab"), 8)), "big") for _ in range(200)]
    raw += [Case(tuple(rng.choice(list("cd"), 8)), "small") for _ in range(6)]
    cb = cbr_trim_init(raw, TrimPolicy(per_label_quota=6))
    counts = {lab: sum(c.solution == lab for c in cb.cases) for lab in cb.labels()}
    assert counts == {"big": 6, "small": 6}
    with pytest.raises(CaseBaseError):
        cbr_trim_init([])


# --- features, explanations, persistence ----------------------------------------------


def test_features(squat_seq):
    schema, problem = qmp_features(squat_seq)
    assert len(schema) == len(problem) == len(default_add()) + 22
    assert problem[schema.index("add:knee oscillation")] == "yes"
    assert problem[schema.index("state:left arm raised")] == "chest-level"
    fs, fp = fluent_features(squat_seq)
    assert len(fs) == len(fp) == 22 * len(squat_seq)


def test_explain_cbr_counts_mismatches():
    cb = _cb(("abcd", "squat"))
    p = tuple("abzz")
    res = cbr_classify(p, cb)
    text = explain(res, (p, cb.schema))
    assert res.similarity == 0.5
    assert text.count("[mismatch]") == 2 and text.count("[match]") == 2
    assert "similarity 0.500" in text
    with pytest.raises(ValueError):
        explain(res)
    with pytest.raises(TypeError):
        explain(42)
    assert isinstance(res, Classification)


def test_case_base_round_trip():
    cb = _cb(("ab", "s"), ("cd", "p"), policy=TrimPolicy(0.3, 9))
    text = dump_case_base(cb)
    again = parse_case_base(text)
    assert again == cb and dump_case_base(again) == text
    with pytest.raises(CaseBaseError):
        parse_case_base("")
    with pytest.raises(CaseBaseError):
        parse_case_base('{"schema": ["a"]}\n{"problem": ["x", "y"], "solution": "s"}\n')


def test_push_up_preset_scores_top():
    windows = dad_windows(generate_motion(preset("push-up")))
    for w in windows:
        best = max(w.scores, key=lambda s: s.ratio)
        assert best.activity == "push-up"
