"""
From raw gaze samples to model windows
======================================

The gaze tracker reports a sample every ~18 ms in display pixels, while the
video advances every ~70 ms. This script follows one simulated recording
through the preprocessing chain and prints what each step does to it.
"""

import numpy as np

from eyelstm.core_data import PointSeries
from eyelstm.preprocess import (FilterConfig, align_eye_to_frames, extract_frame_feature, fill_gaps,
                                heuristic_filter, make_windows, mirror_pad, normalize, rescale_coords)
from eyelstm.simulator import make_scenario, simulate

scenario = make_scenario("occlusion", duration_s=10.0, seed=1)
truth, eye, track = simulate(scenario)
print(f"{len(eye)} gaze samples, {sum(not s.valid for s in eye)} lost to blinks, {len(truth)} video frames")

# %%
# Each frame collects the valid samples taken while it was on screen.
groups = align_eye_to_frames(eye, scenario.frame_ms, len(truth))
sizes = np.array([len(g) for g in groups])
print("samples per frame:", np.bincount(sizes))

# %%
# One point per frame, gaps bridged by interpolation.
per_frame = [extract_frame_feature(g) for g in groups]
print("empty frames:", sum(p is None for p in per_frame))
display = fill_gaps(per_frame, "pixels_display")

# %%
# Back to the original video grid, then spike removal. The filter works on
# each coordinate separately and never leaves the input's range.
original = rescale_coords(display, scenario.dims)
clean = heuristic_filter(original, FilterConfig(theta1=30.0, theta2=30.0))
changed = np.any(clean.points != original.points, axis=1)
print(f"filter touched {changed.sum()} of {len(changed)} frames")

err = lambda pts: np.sqrt(np.mean((pts - truth) ** 2))  # noqa: E731
print(f"RMSE vs truth in pixels: before filter {err(original.points):.1f}, after {err(clean.points):.1f}")

# %%
# Normalize by the frame size and cut into 24-frame windows. A short final
# window repeats its last point and remembers how many steps are padding.
features = normalize(clean, scenario.dims)
windows = make_windows(features)
print(f"{len(windows)} windows, last one has padded_tail={windows[-1].padded_tail}")

# %%
# EyeLSTM sees each window mirror padded to 30 steps; three valid kernel-3
# convolutions bring it back to 24.
padded = mirror_pad(windows[0])
print("first x values of window 0:", np.round(windows[0].steps[:4, 0], 3))
print("first x values padded:     ", np.round(padded.steps[:7, 0], 3))
assert np.array_equal(padded.steps[3:27], windows[0].steps)

# A toy example of the single-sample spike rule:
spike = PointSeries(np.column_stack([[0, 0, 50, 0, 0], [0, 0, 0, 0, 0]]))
print("spike [0,0,50,0,0] ->", heuristic_filter(spike).points[:, 0])
