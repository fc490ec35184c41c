"""Sample tensors, observation masks and the imputation-combination rule.

All tensors are dense ``[n_samples, seq_len, n_features]`` float64 arrays.
Missing cells carry NaN in ``values``; the mask is the authoritative record
(1 = observed) and is stored as ``uint8``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MISSING = np.nan


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Values with an observed-mask, both shaped ``[N, T, D]``."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        mask = np.array(self.mask)
        if values.ndim != 3:
            raise ValueError(f"values must be 3-D [N, T, D], got shape {values.shape}")
        if values.shape != mask.shape:
            raise ValueError(f"values {values.shape} and mask {mask.shape} shapes differ")
        if min(values.shape) < 1:
            raise ValueError(f"every dimension must be >= 1, got {values.shape}")
        if not np.isin(mask, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        mask = mask.astype(np.uint8)
        observed = mask.astype(bool)
        if np.isnan(values[observed]).any():
            raise ValueError("observed cells (mask = 1) must not hold the missing marker")
        if not np.isfinite(values[observed]).all():
            raise ValueError("observed cells must be finite")
        values[~observed] = MISSING
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "mask", _readonly(mask))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def seq_len(self) -> int:
        return self.values.shape[1]

    @property
    def n_features(self) -> int:
        return self.values.shape[2]

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    def zero_filled(self) -> np.ndarray:
        """Values with missing cells replaced by 0 (a writable copy)."""
        return np.where(self.mask.astype(bool), self.values, 0.0)

    def subset(self, index) -> "SampleSet":
        return SampleSet(self.values[index], self.mask[index])


@dataclass(frozen=True, eq=False)
class GroundSet:
    """A sample set after artificial missingness was injected.

    ``indicating_mask`` marks the removed cells and ``truth`` holds their
    original values (NaN everywhere else).
    """

    corrupted: SampleSet
    indicating_mask: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        ind = np.array(self.indicating_mask)
        truth = np.array(self.truth, dtype=np.float64)
        if ind.shape != self.corrupted.shape or truth.shape != self.corrupted.shape:
            raise ValueError("indicating_mask and truth must match the corrupted set's shape")
        if not np.isin(ind, (0, 1)).all():
            raise ValueError("indicating_mask entries must be 0 or 1")
        ind = ind.astype(np.uint8)
        if (ind & self.corrupted.mask).any():
            raise ValueError("indicating_mask overlaps observed cells of the corrupted set")
        if not np.isfinite(truth[ind.astype(bool)]).all():
            raise ValueError("truth must be finite at every indicated cell")
        truth = np.where(ind.astype(bool), truth, MISSING)
        object.__setattr__(self, "indicating_mask", _readonly(ind))
        object.__setattr__(self, "truth", _readonly(truth))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.corrupted.shape

    @property
    def n_indicated(self) -> int:
        return int(self.indicating_mask.sum())

    def original(self) -> SampleSet:
        """The pre-grind sample set (corrupted cells restored from ``truth``)."""
        ind = self.indicating_mask.astype(bool)
        values = np.where(ind, self.truth, self.corrupted.values)
        return SampleSet(values, self.corrupted.mask | self.indicating_mask)

    def uncorrupted(self) -> "GroundSet":
        """A ground set with nothing removed; used for fully observed evaluation-free splits."""
        zeros = np.zeros(self.shape, dtype=np.uint8)
        return GroundSet(self.original(), zeros, np.full(self.shape, MISSING))


def mask_from_missing(values) -> SampleSet:
    """Build a :class:`SampleSet` whose mask marks every non-NaN cell as observed.

    Raises ``ValueError`` for infinite values; they are not a valid missing marker.
    """
    values = np.asarray(values, dtype=np.float64)
    if np.isinf(values).any():
        raise ValueError("values contain +/-inf; only NaN marks a missing cell")
    return SampleSet(values, (~np.isnan(values)).astype(np.uint8))


def with_markers(values, mask) -> np.ndarray:
    """Write the missing marker into ``values`` wherever ``mask`` is 0."""
    values = np.array(values, dtype=np.float64)
    values[np.asarray(mask) == 0] = MISSING
    return values


def combine(X: SampleSet, X_bar) -> np.ndarray:
    """Keep observed values of ``X`` and take ``X_bar`` everywhere else.

    ``X_hat = M * X + (1 - M) * X_bar``, evaluated with ``np.where`` so the
    NaN markers in ``X.values`` never leak into the result.
    """
    X_bar = np.asarray(X_bar, dtype=np.float64)
    if X_bar.shape != X.shape:
        raise ValueError(f"X_bar shape {X_bar.shape} does not match {X.shape}")
    if np.isnan(X_bar).any():
        raise ValueError("X_bar contains the missing marker")
    if not np.isfinite(X_bar).all():
        raise ValueError("X_bar must be finite everywhere")
    return np.where(X.mask.astype(bool), X.values, X_bar)
