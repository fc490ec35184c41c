"""Dataset ingestion and preprocessing: CSV loading, period split, windowing, standardization."""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import MISSING, SampleSet, mask_from_missing

_MISSING_TOKENS = {"", "nan", "NaN", "NAN"}

DATA_DIR_ENV = "POTSBENCH_DATA"


@dataclass(frozen=True, eq=False)
class TimeSeriesFrame:
    """A long multivariate series before windowing.

    ``timestamps`` is a ``datetime64[s]`` vector of length L and ``data`` an
    ``[L, D]`` float array (NaN = missing) whose columns follow ``feature_names``.
    """

    timestamps: np.ndarray
    data: np.ndarray
    feature_names: tuple[str, ...]
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps).astype("datetime64[s]")
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != ts.shape[0]:
            raise ValueError(f"data shape {data.shape} does not match {ts.shape[0]} timestamps")
        if data.shape[1] != len(self.feature_names):
            raise ValueError("feature_names length must equal the column count")
        if ts.shape[0] > 1 and not (np.diff(ts) > np.timedelta64(0, "s")).all():
            raise ValueError("timestamps must be strictly increasing")
        if self.labels is not None and len(self.labels) != ts.shape[0]:
            raise ValueError("labels length must equal the row count")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def n_features(self) -> int:
        return self.data.shape[1]

    def rows(self, start: int, stop: int) -> "TimeSeriesFrame":
        labels = None if self.labels is None else self.labels[start:stop]
        return TimeSeriesFrame(self.timestamps[start:stop], self.data[start:stop], self.feature_names, labels)


@dataclass(frozen=True)
class DatasetRecipe:
    """How to turn one CSV file into train/val/test sample sets.

    Exactly one of ``boundaries`` (two ISO instants; a row belongs to the
    later split once its timestamp reaches the cut) or ``fractions``
    (train/val/test shares of the row count) must be given.
    """

    name: str
    path: str
    window: int
    boundaries: Optional[tuple[str, str]] = None
    fractions: Optional[tuple[float, float, float]] = None
    target: Optional[str] = None
    label: Optional[str] = None
    drop_final_window: bool = False

    def __post_init__(self):
        if self.window < 2:
            raise ValueError(f"window length must be >= 2, got {self.window}")
        if (self.boundaries is None) == (self.fractions is None):
            raise ValueError("give exactly one of boundaries or fractions")
        if self.boundaries is not None:
            if len(self.boundaries) != 2:
                raise ValueError("boundaries must hold two cut instants")
            a, b = (_parse_instant(x) for x in self.boundaries)
            if not a < b:
                raise ValueError("split boundaries must be ordered")
        if self.fractions is not None:
            if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
                raise ValueError("fractions must be three non-negative shares")
            if sum(self.fractions) > 1 + 1e-9:
                raise ValueError(f"fractions sum to {sum(self.fractions)} > 1")

    def resolved_path(self) -> Path:
        p = Path(self.path)
        if not p.is_absolute() and not p.exists() and os.environ.get(DATA_DIR_ENV):
            return Path(os.environ[DATA_DIR_ENV]) / p.name
        return p


def ett_h1_recipe(path: str | None = None) -> DatasetRecipe:
    """ETT_h1: 14/5/5 months train/val/test by calendar period, windows of 48 steps, target ``OT``.

    ``drop_final_window`` reproduces the sample counts 212/75/71 of the
    reference preprocessing, which never emits the last full window.
    """
    if path is None:
        path = str(Path(os.environ.get(DATA_DIR_ENV, "data")) / "ETTh1.csv")
    return DatasetRecipe(
        name="ett_h1",
        path=path,
        window=48,
        boundaries=("2017-09-01T00:00:00", "2018-02-01T00:00:00"),
        target="OT",
        drop_final_window=True,
    )


def csv_recipe(name: str, path: str, window: int, fractions=(0.6, 0.2, 0.2), **kwargs) -> DatasetRecipe:
    """Generic fraction-split recipe for any timestamped CSV."""
    return DatasetRecipe(name=name, path=path, window=window, fractions=tuple(fractions), **kwargs)


BUILTIN_RECIPES = {"ett_h1": ett_h1_recipe}


def _parse_instant(text) -> np.datetime64:
    if isinstance(text, datetime):
        return np.datetime64(text.replace(tzinfo=None), "s")
    return np.datetime64(datetime.fromisoformat(str(text).strip()).replace(tzinfo=None), "s")


def _parse_timestamps(raw: list[str]) -> np.ndarray:
    # epoch seconds if every entry is numeric, ISO-8601 otherwise
    try:
        secs = [float(x) for x in raw]
    except ValueError:
        secs = None
    if secs is not None:
        return np.array([int(round(s)) for s in secs], dtype="datetime64[s]")
    out, bad = [], []
    for i, x in enumerate(raw):
        try:
            out.append(_parse_instant(x))
        except ValueError:
            bad.append(i)
    if bad:
        shown = ", ".join(str(i) for i in bad[:10])
        raise ValueError(f"unparseable timestamp in data rows {shown}")
    return np.array(out, dtype="datetime64[s]")


def load_csv(path, recipe: DatasetRecipe | None = None) -> TimeSeriesFrame:
    """Read a CSV whose first column is a timestamp and the rest are numeric features.

    Empty fields and ``NaN`` become missing; rows are sorted by time and
    duplicate timestamps are rejected. With a recipe naming a ``label``
    column, that column is split off as per-row labels.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if len(header) < 2:
        raise ValueError(f"{path}: need a timestamp column and at least one feature column")
    if not rows:
        raise ValueError(f"{path}: zero data rows")
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise ValueError(f"{path}: data row {i} has {len(r)} fields, header has {len(header)}")

    timestamps = _parse_timestamps([r[0] for r in rows])
    names = [h.strip() for h in header[1:]]
    data = np.empty((len(rows), len(names)))
    for i, r in enumerate(rows):
        for j, cell in enumerate(r[1:]):
            cell = cell.strip()
            if cell in _MISSING_TOKENS:
                data[i, j] = MISSING
                continue
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise ValueError(f"{path}: non-numeric value {cell!r} in data row {i}, column {names[j]!r}") from None
            if not math.isfinite(data[i, j]):
                raise ValueError(f"{path}: non-finite value in data row {i}, column {names[j]!r}")

    order = np.argsort(timestamps, kind="stable")
    timestamps, data = timestamps[order], data[order]
    dup = np.flatnonzero(np.diff(timestamps) == np.timedelta64(0, "s"))
    if dup.size:
        raise ValueError(f"{path}: duplicate timestamp {timestamps[dup[0]]}")

    labels = None
    if recipe is not None and recipe.label is not None:
        if recipe.label not in names:
            raise ValueError(f"{path}: label column {recipe.label!r} not found")
        j = names.index(recipe.label)
        labels = data[:, j].copy()
        data = np.delete(data, j, axis=1)
        names.pop(j)
    return TimeSeriesFrame(timestamps, data, tuple(names), labels)


def split_by_period(frame: TimeSeriesFrame, recipe: DatasetRecipe):
    """Cut a frame into (train, val, test) contiguous periods."""
    L = len(frame)
    if recipe.boundaries is not None:
        cuts = [_parse_instant(b) for b in recipe.boundaries]
        lo, hi = frame.timestamps[0], frame.timestamps[-1]
        for c in cuts:
            if not lo < c <= hi:
                raise ValueError(f"split boundary {c} lies outside the series range ({lo}, {hi}]")
        i1 = int(np.searchsorted(frame.timestamps, cuts[0], side="left"))
        i2 = int(np.searchsorted(frame.timestamps, cuts[1], side="left"))
        stops = (i1, i2, L)
    else:
        f_tr, f_va, f_te = recipe.fractions
        n_tr = int(math.floor(f_tr * L + 1e-9))
        n_va = int(math.floor(f_va * L + 1e-9))
        if abs(f_tr + f_va + f_te - 1) < 1e-9:
            stop = L
        else:
            stop = min(L, n_tr + n_va + int(math.floor(f_te * L + 1e-9)))
        stops = (n_tr, n_tr + n_va, stop)
    starts = (0, stops[0], stops[1])
    parts = []
    for name, a, b in zip(("train", "val", "test"), starts, stops):
        if b <= a:
            raise ValueError(f"{name} split is empty")
        parts.append(frame.rows(a, b))
    return tuple(parts)


def window(frame: TimeSeriesFrame, T: int, drop_final_window: bool = False) -> SampleSet:
    """Non-overlapping windows of ``T`` rows; trailing remainder rows are dropped.

    ``drop_final_window`` additionally discards the last full window.
    """
    if T < 2:
        raise ValueError(f"window length must be >= 2, got {T}")
    L = len(frame)
    if T > L:
        raise ValueError(f"window longer than series ({T} > {L})")
    n = L // T - (1 if drop_final_window else 0)
    if n < 1:
        raise ValueError(f"series of length {L} yields no window of {T} steps")
    return mask_from_missing(frame.data[: n * T].reshape(n, T, frame.n_features))


def window_labels(frame: TimeSeriesFrame, T: int, drop_final_window: bool = False) -> Optional[np.ndarray]:
    """Per-window label, taken from each window's last row."""
    if frame.labels is None:
        return None
    n = len(frame) // T - (1 if drop_final_window else 0)
    return frame.labels[T - 1 : n * T : T].copy()


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).copy()
        scale = np.asarray(self.scale, dtype=np.float64).copy()
        if mean.shape != scale.shape or mean.ndim != 1:
            raise ValueError("mean and scale must be 1-D and of equal length")
        if not (scale > 0).all():
            raise ValueError("scale must be strictly positive")
        mean.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]


def fit_standardizer(train: SampleSet) -> Standardizer:
    """Per-feature mean and population std over the observed training cells.

    Scales below 1e-12 fall back to 1; a feature with no observed cell gets
    mean 0, scale 1 and a warning.
    """
    D = train.n_features
    mean, scale = np.zeros(D), np.ones(D)
    vals = train.values.reshape(-1, D)
    obs = train.mask.reshape(-1, D).astype(bool)
    for d in range(D):
        x = vals[obs[:, d], d]
        if x.size == 0:
            warnings.warn(f"feature {d} has no observed training cell; using mean 0, scale 1", stacklevel=2)
            continue
        mean[d] = x.mean()
        sd = x.std()
        if np.isfinite(sd) and sd >= 1e-12:
            scale[d] = sd
    return Standardizer(mean, scale)


def standardize(samples: SampleSet, standardizer: Standardizer, direction: str = "forward") -> SampleSet:
    if samples.n_features != standardizer.n_features:
        raise ValueError(f"feature count {samples.n_features} != standardizer's {standardizer.n_features}")
    if direction == "forward":
        values = (samples.values - standardizer.mean) / standardizer.scale
    elif direction == "inverse":
        values = samples.values * standardizer.scale + standardizer.mean
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return SampleSet(values, samples.mask)


@dataclass(frozen=True, eq=False)
class PreparedDataset:
    """Standardized train/val/test sample sets plus the metadata downstream stages need."""

    name: str
    train: SampleSet
    val: SampleSet
    test: SampleSet
    standardizer: Standardizer
    feature_names: tuple[str, ...]
    target: Optional[str] = None
    labels: dict = field(default_factory=dict)


def prepare(recipe: DatasetRecipe, frame: TimeSeriesFrame | None = None) -> PreparedDataset:
    """Load (unless ``frame`` is given), split, window and standardize per ``recipe``."""
    if frame is None:
        frame = load_csv(recipe.resolved_path(), recipe)
    if recipe.target is not None and recipe.target not in frame.feature_names:
        raise ValueError(f"target feature {recipe.target!r} not in {frame.feature_names}")
    splits = split_by_period(frame, recipe)
    windows = [window(s, recipe.window, recipe.drop_final_window) for s in splits]
    scaler = fit_standardizer(windows[0])
    train, val, test = (standardize(w, scaler) for w in windows)
    labels = {}
    if frame.labels is not None:
        for key, s in zip(("train", "val", "test"), splits):
            labels[key] = window_labels(s, recipe.window, recipe.drop_final_window)
    return PreparedDataset(recipe.name, train, val, test, scaler, frame.feature_names, recipe.target, labels)


def with_path(recipe: DatasetRecipe, path: str) -> DatasetRecipe:
    return replace(recipe, path=path)


def frame_from_arrays(data, start: str = "2000-01-01T00:00:00", step_s: int = 3600,
                      feature_names: Sequence[str] | None = None, labels=None) -> TimeSeriesFrame:
    """Build a regularly spaced frame from an ``[L, D]`` array (for synthetic data)."""
    data = np.asarray(data, dtype=np.float64)
    L, D = data.shape
    t0 = _parse_instant(start)
    ts = t0 + np.arange(L) * np.timedelta64(step_s, "s")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{d}" for d in range(D))
    return TimeSeriesFrame(ts, data, names, labels)


def write_csv(frame: TimeSeriesFrame, path) -> None:
    """Write a frame in the loader's format (ISO timestamps, empty field = missing)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *frame.feature_names])
        for t, row in zip(frame.timestamps, frame.data):
            stamp = datetime.fromtimestamp(int(t.astype(np.int64)), tz=timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
            w.writerow([stamp, *("" if np.isnan(v) else repr(float(v)) for v in row)])
