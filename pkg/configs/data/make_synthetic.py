"""Regenerate synthetic.csv: hourly sinusoids, a linear target ``y`` and ~2% native gaps."""

from pathlib import Path

import numpy as np

from potsbench.pipeline import frame_from_arrays, write_csv

rng = np.random.default_rng(20240601)
length, periods = 1440, (24.0, 17.0, 31.0, 53.0)
t = np.arange(length)
x = np.stack([np.sin(2 * np.pi * t / p + rng.uniform(0, 2 * np.pi)) for p in periods], axis=1)
x += 0.05 * rng.standard_normal(x.shape)
y = x @ np.array([0.8, -0.5, 0.3, 1.1]) + 0.05 * rng.standard_normal(length)
data = np.column_stack([x, y])
data[:, :4][rng.random((length, 4)) < 0.02] = np.nan
frame = frame_from_arrays(np.round(data, 6), start="2021-01-01T00:00:00",
                          feature_names=["s24", "s17", "s31", "s53", "y"])
write_csv(frame, Path(__file__).with_name("synthetic.csv"))
