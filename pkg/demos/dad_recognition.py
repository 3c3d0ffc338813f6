"""Score every preset exercise against every activity definition.

Run: python demos/dad_recognition.py
"""

from qposture.qmp import default_add
from qposture.recognition import dad_windows, explain, mean_ratios
from qposture.synth import generate_motion, preset

names = ("squat", "push-up", "jumping jack", "single-leg romanian deadlift")
for name in names:
    windows = dad_windows(generate_motion(preset(name)))
    ratios = mean_ratios(windows)
    best = max(ratios, key=ratios.get)
    print(f"{name:30s} -> {best} ({ratios[best]:.2f})")

# why is a jumping jack not a squat?
w = dad_windows(generate_motion(preset("jumping jack")))[0]
print()
print(explain(next(s for s in w.scores if s.activity == "squat"), default_add()))
