"""Grow a case base from perturbed clips, trim it, then classify held-out clips.

Run: python demos/cbr_learning.py
"""

import numpy as np

from qposture.recognition import (
    Case, TrimPolicy, cbr_classify, cbr_retain, cbr_trim_init, qmp_features,
)
from qposture.synth import generate_motion, perturbed

names = ("squat", "push-up", "jumping jack", "single-leg romanian deadlift")
rng = np.random.default_rng(0)


def clip_case(name, noise):
    schema, problem = qmp_features(generate_motion(perturbed(name, rng, noise=noise)))
    return schema, Case(problem, name)


raw = []
for name in names:
    for _ in range(8):
        schema, case = clip_case(name, 0.01)
        raw.append(case)

cb = cbr_trim_init(raw, TrimPolicy(per_label_quota=3), schema)
print(f"trimmed {len(raw)} raw cases to {len(cb)}")

hits = 0
for i in range(12):
    name = names[i % 4]
    _, case = clip_case(name, 0.02)
    got = cbr_classify(case.problem, cb)
    hits += got.label == name
    cb = cbr_retain(cb, case, correct=got.label == name)
print(f"held-out accuracy {hits}/12, case base now {len(cb)} cases")
