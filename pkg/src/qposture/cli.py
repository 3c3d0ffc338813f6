"""Command-line entry point: ``qposture <command> [options]``.

Every command writes line-delimited JSON (``--format records``) or plain text.
Errors produce one JSON record on stderr and exit status 2 (configuration)
or 3 (data).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .fluents import FluentConfigError, fluent_stream, load_fluent_config, transition_confidence
from .qmp import (
    ADDConfigError,
    RegressionConfig,
    characterize_window,
    load_add,
    motion_series,
    series_ids,
    window_bounds,
)
from .recognition import (
    ActivityConfigError,
    Case,
    CaseBase,
    CaseBaseError,
    cbr_classify,
    cbr_retain,
    cbr_trim_init,
    dad_windows,
    dump_case_base,
    explain,
    load_activities,
    parse_case_base,
    parse_case_records,
    qmp_features,
)
from .skeleton import DegenerateSkeletonError, PoseFormatError, parse_pose_sequence, serialize_pose_sequence
from .synth import InfeasibleMotionError, PRESETS, generate_motion, load_motion_spec, preset

CONFIG_ERROR = 2
DATA_ERROR = 3


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False)


# ---------------------------------------------------------------------------
# Loading (all configuration first, then data)


def _load_configs(args):
    cfg = {}
    try:
        registry, near, r = load_fluent_config(getattr(args, "fluents", None))
        cfg.update(registry=registry, near=near, r=r)
        if hasattr(args, "add"):
            cfg["add"] = load_add(args.add)
        if hasattr(args, "activities"):
            cfg["activities"], cfg["policy"] = load_activities(args.activities, cfg.get("add"))
        if getattr(args, "cb", None) and getattr(args, "cb_must_exist", True):
            text = Path(args.cb).read_text(encoding="utf-8")
            cfg["cb"] = parse_case_base(text, cfg.get("policy"))
    except OSError as exc:
        raise ConfigError(str(exc)) from None
    except (FluentConfigError, ADDConfigError, ActivityConfigError, CaseBaseError) as exc:
        raise ConfigError(str(exc)) from None
    if getattr(args, "epsilon", None) is not None and not 0.0 < args.epsilon < 0.5:
        raise ConfigError("--epsilon must lie in (0, 0.5)")
    if getattr(args, "window", None) is not None and not (args.window > 0 and args.hop > 0):
        raise ConfigError("--window and --hop must be positive")
    return cfg


def _load_poses(args):
    if not args.poses:
        raise ConfigError("--poses is required")
    try:
        data = Path(args.poses).read_bytes()
    except OSError as exc:
        raise ConfigError(str(exc)) from None
    if args.fps is not None and not args.fps > 0:
        raise ConfigError("--fps must be positive")
    return parse_pose_sequence(data, args.fps, allow_missing_optional=args.allow_missing_optional)


# ---------------------------------------------------------------------------
# Commands


def cmd_annotate(args, out):
    cfg = _load_configs(args)
    seq = _load_poses(args)
    stream = fluent_stream(seq, cfg["registry"], args.epsilon, cfg["near"], cfg["r"])
    for rep in stream:
        if args.format == "records":
            out.write(_dump(rep.to_record()) + "\n")
            continue
        parts = [
            f"{key} ({c:.3f})" for key, c in rep.entries.items()
            if c >= 0.5 and (" near " not in key or key.endswith((":near", ":touching")))
        ]
        out.write(f"frame {rep.frame_index}: " + "; ".join(parts) + "\n")


def cmd_qmp(args, out):
    cfg = _load_configs(args)
    seq = _load_poses(args)
    motion = motion_series(seq, cfg["registry"])
    ids = series_ids(cfg["registry"])
    for start, stop in window_bounds(len(seq), seq.frame_rate, args.window, args.hop):
        models = characterize_window(motion, ids, start, stop, RegressionConfig())
        for fid in ids:
            if fid not in models:
                continue
            m = models[fid]
            if args.format == "records":
                out.write(_dump(m.to_record()) + "\n")
            else:
                lam = " ".join(f"{x:+.3f}" for x in m.coefficients)
                out.write(f"[{start},{stop}) {fid}: T={m.period:.3f} lambda=[{lam}] residual={m.residual:.4f}\n")


def cmd_dad(args, out):
    cfg = _load_configs(args)
    seq = _load_poses(args)
    windows = dad_windows(seq, cfg["add"], cfg["activities"], registry=cfg["registry"],
                          config=RegressionConfig(), window=args.window, hop=args.hop)
    for w in windows:
        for s in w.scores:
            text = explain(s, cfg["add"])
            if args.format == "records":
                out.write(_dump({"window": [w.start, w.stop], "t": w.t_start, **s.to_record(),
                                 "explanation": text}) + "\n")
            else:
                out.write(f"window [{w.start},{w.stop}) t={w.t_start:.3f}s\n{text}\n")


def _features(args, cfg, seq):
    return qmp_features(seq, cfg["add"], cfg["registry"], config=RegressionConfig(),
                        window=args.window, hop=args.hop, epsilon=args.epsilon)


def _check_schema(cb: CaseBase, schema) -> None:
    if tuple(cb.schema) != tuple(schema):
        raise ConfigError("case base schema does not match the configured features")


def cmd_cbr(args, out):
    if args.action == "trim":
        return _cbr_trim(args, out)
    args.cb_must_exist = args.action != "case"
    cfg = _load_configs(args)
    if args.action in ("classify", "retain") and not args.cb:
        raise ConfigError("--cb is required")
    if args.action in ("retain", "case") and not args.label:
        raise ConfigError("--label is required")
    seq = _load_poses(args)
    schema, problem = _features(args, cfg, seq)
    source = args.source or Path(args.poses).name

    if args.action == "case":
        case = Case(problem, args.label, source)
        if args.cb:
            path = Path(args.cb)
            if path.exists() and path.stat().st_size:
                have, _, cases = parse_case_records(path.read_text(encoding="utf-8"))
                if tuple(have) != schema:
                    raise ConfigError("corpus schema does not match the configured features")
                case = Case(problem, args.label, source, len(cases))
                with path.open("a", encoding="utf-8") as fh:
                    fh.write(_dump(case.to_record()) + "\n")
            else:
                path.write_text(dump_case_base(CaseBase(schema, (case,), cfg["policy"])), encoding="utf-8")
            out.write(_dump({"appended": str(path), "seq": case.seq, "label": case.solution}) + "\n")
        else:
            out.write(dump_case_base(CaseBase(schema, (case,), cfg["policy"])))
        return

    cb = cfg["cb"]
    _check_schema(cb, schema)
    if args.action == "classify":
        res = cbr_classify(problem, cb)
        text = explain(res, (problem, schema))
        if args.format == "records":
            out.write(_dump({**res.to_record(), "explanation": text}) + "\n")
        else:
            out.write(text + "\n")
        return

    # retain
    predicted = cbr_classify(problem, cb).label if cb.cases else None
    correct = predicted == args.label
    new = cbr_retain(cb, Case(problem, args.label, source), correct)
    retained = new is not cb
    target = Path(args.out or args.cb)
    target.write_text(dump_case_base(new), encoding="utf-8")
    rec = {"label": args.label, "predicted": predicted, "correct": correct,
           "retained": retained, "size": len(new)}
    out.write(_dump(rec) + "\n" if args.format == "records" else
              f"{'retained' if retained else 'rejected'} {args.label} (predicted {predicted}); case base size {len(new)}\n")


def _cbr_trim(args, out):
    cfg = _load_configs(args)
    if not args.cases:
        raise ConfigError("--cases is required")
    try:
        schema, stored, cases = parse_case_records(Path(args.cases).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(str(exc)) from None
    except CaseBaseError as exc:
        raise DataError(str(exc)) from None
    if not cases:
        raise DataError("corpus holds no cases")
    policy = cfg["policy"] if args.activities else stored
    cb = cbr_trim_init(cases, policy, schema)
    text = dump_case_base(cb)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        counts = {lab: sum(c.solution == lab for c in cb.cases) for lab in cb.labels()}
        out.write(_dump({"kept": len(cb), "raw": len(cases), "per_label": counts}) + "\n")
    else:
        out.write(text)


def cmd_synth(args, out):
    try:
        if args.spec:
            spec = load_motion_spec(args.spec)
        else:
            overrides = {k: v for k, v in (("duration", args.duration), ("frame_rate", args.fps),
                                           ("noise", args.noise), ("seed", args.seed),
                                           ("period", args.period)) if v is not None}
            spec = preset(args.preset, **overrides)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InfeasibleMotionError):
            raise
        raise ConfigError(str(exc).strip("'\"")) from None
    text = serialize_pose_sequence(generate_motion(spec))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)


def cmd_curves(args, out):
    cfg = _load_configs(args)
    if args.samples < 2:
        raise ConfigError("--samples must be at least 2")
    specs = {s.id: s for s in cfg["registry"]}
    if args.fluent == "near":
        tr = cfg["near"].near
        hi = max(2.0, tr.tau + 2 * tr.delta)
        pts = set(np.linspace(0.0, hi, args.samples).tolist()) | {tr.tau, tr.tau - tr.delta, tr.tau + tr.delta}
        def conf(x):
            c = transition_confidence(x, tr, args.epsilon)
            return {"near": c, "far": 1.0 - c}
    elif args.fluent in specs:
        spec = specs[args.fluent]
        pts = set(np.linspace(0.0, math.pi, args.samples).tolist())
        for t in spec.transitions:
            pts |= {t.tau, t.tau - t.delta, t.tau + t.delta}

        def conf(x):
            return {k: float(v) for k, v in spec.state_confidences(x, args.epsilon).items()}
    else:
        raise ConfigError(f"unknown fluent {args.fluent!r}")
    for x in sorted(p for p in pts if p >= 0):
        c = conf(x)
        if args.format == "records":
            out.write(_dump({"fluent": args.fluent, "x": x, "confidence": c}) + "\n")
        else:
            out.write(f"{x:.6f} " + " ".join(f"{k}={v:.6f}" for k, v in c.items()) + "\n")


# ---------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    """Usage errors become ConfigError so they share the JSON error path."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "records"), default="records")
    common.add_argument("--fluents", help="fluent threshold config (JSON)")
    common.add_argument("--epsilon", type=float, default=1e-3)

    poses = argparse.ArgumentParser(add_help=False)
    poses.add_argument("--poses", help="line-delimited pose file")
    poses.add_argument("--fps", type=float, help="frame rate (default: inferred from timestamps)")
    poses.add_argument("--allow-missing-optional", action="store_true",
                       help="accept frames without index fingers, heels or big toes (disables their Near pairs)")

    windowed = argparse.ArgumentParser(add_help=False)
    windowed.add_argument("--window", type=float, default=3.0, help="window length in seconds")
    windowed.add_argument("--hop", type=float, default=1.0, help="window hop in seconds")

    add = argparse.ArgumentParser(add_help=False)
    add.add_argument("--add", help="Action Description Database (JSON)")

    acts = argparse.ArgumentParser(add_help=False)
    acts.add_argument("--activities", help="activity definitions and CBR policy (JSON)")

    p = _Parser(prog="qposture", description="Qualitative posture fluents, motion primitives and activity recognition.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("annotate", parents=[common, poses], help="per-frame fluent confidences")
    s.set_defaults(func=cmd_annotate)
    s = sub.add_parser("qmp", parents=[common, poses, windowed], help="QMP models per window and series")
    s.set_defaults(func=cmd_qmp)
    s = sub.add_parser("dad", parents=[common, poses, windowed, add, acts], help="activity scores per window")
    s.set_defaults(func=cmd_dad)

    s = sub.add_parser("cbr", parents=[common, poses, windowed, add, acts], help="case-based reasoning")
    s.add_argument("action", choices=("classify", "retain", "trim", "case"))
    s.add_argument("--cb", help="case base file")
    s.add_argument("--cases", help="raw case corpus (trim)")
    s.add_argument("--label", help="activity label (retain, case)")
    s.add_argument("--source", help="source id stored with a new case")
    s.add_argument("--out", help="output file (retain, trim)")
    s.set_defaults(func=cmd_cbr)

    s = sub.add_parser("synth", help="synthetic pose sequence")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", choices=PRESETS)
    g.add_argument("--spec", help="motion spec file (JSON)")
    s.add_argument("--duration", type=float)
    s.add_argument("--fps", type=float)
    s.add_argument("--noise", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--period", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("curves", parents=[common], help="confidence curve samples for plotting")
    s.add_argument("--fluent", required=True, help="fluent id, or 'near'")
    s.add_argument("--samples", type=int, default=181)
    s.set_defaults(func=cmd_curves)
    return p


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        args.func(args, stdout)
    except ConfigError as exc:
        stderr.write(_dump({"error": "config", "message": str(exc)}) + "\n")
        return CONFIG_ERROR
    except (DataError, PoseFormatError, DegenerateSkeletonError, InfeasibleMotionError) as exc:
        rec = {"error": "data", "message": str(exc)}
        if getattr(exc, "frame", None) is not None:
            rec["frame"] = exc.frame
        stderr.write(_dump(rec) + "\n")
        return DATA_ERROR
    except Exception as exc:  # anything unforeseen still yields one record
        stderr.write(_dump({"error": "internal", "message": f"{type(exc).__name__}: {exc}"}) + "\n")
        return DATA_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
