"""Fit motion primitives to each joint-angle series of a jumping jack.

Only series with a noticeable oscillation are printed.
Run: python demos/qmp_characterization.py
"""

from qposture.qmp import characterize_window, motion_series, series_ids, window_bounds
from qposture.synth import generate_motion, preset

seq = generate_motion(preset("jumping jack", duration=3.0, noise=0.003, seed=1))
motion = motion_series(seq)
(start, stop), = window_bounds(len(seq), seq.frame_rate)
models = characterize_window(motion, series_ids(), start, stop)

print(f"window [{start}, {stop}) of {len(seq)} frames")
for fid, m in sorted(models.items(), key=lambda kv: -kv[1].osc_amplitude):
    if m.osc_amplitude < 0.5:
        continue
    print(f"{fid:22s} T={m.period:5.3f}s  osc amplitude={m.osc_amplitude:5.2f}  "
          f"terms={m.sparsity}  residual={m.residual:.3f}")
