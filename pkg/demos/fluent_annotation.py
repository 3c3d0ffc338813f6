"""Annotate a synthetic squat with posture fluents and print a few frames.

For each chosen fluent the most confident state is shown, static and motion.
Run: python demos/fluent_annotation.py
"""

from qposture.fluents import default_registry, fluent_stream
from qposture.synth import generate_motion, preset

WATCH = ("left leg bent", "left leg raised", "torso tilted forward", "left arm raised")

seq = generate_motion(preset("squat", duration=2.0))
stream = fluent_stream(seq)


def top(entries, prefix, states, group=""):
    # tilt fluents share one centered state, stored under the group name
    keys = [f"{group}:{s}" if group and s == "centered" else f"{prefix}:{s}" for s in states]
    scored = [(entries.get(k, 0.0), s) for k, s in zip(keys, states)]
    c, s = max(scored)
    return f"{s} ({c:.2f})"


specs = {s.id: s for s in default_registry()}
for rep in stream.reports[::6]:
    t = seq[rep.frame_index].timestamp
    cols = []
    for fid in WATCH:
        spec = specs[fid]
        cols.append(f"{fid}: {top(rep.entries, fid, spec.states, spec.group)}")
        if f"{fid}:{spec.temporal_states[2]}" in rep.entries:
            cols[-1] += f" / {top(rep.entries, fid, spec.temporal_states)}"
    print(f"t={t:4.2f}s  " + " | ".join(cols))
