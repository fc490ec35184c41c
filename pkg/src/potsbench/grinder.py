"""Artificial missingness: point, subsequence and block patterns.

Every pattern removes exactly ``floor(rate * n_observed)`` currently observed
cells, so realized rates are exact and reruns with the same seed are
bit-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .core import MISSING, GroundSet, SampleSet
from .rng import substream

PATTERNS = ("point", "subsequence", "block")


def target_count(rate: float, n_observed: int) -> int:
    """``floor(rate * n_observed)`` evaluated on the decimal value of ``rate``."""
    return math.floor(Fraction(repr(float(rate))) * n_observed)


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def default_seq_len(T: int) -> int:
    return min(T, max(2, _half_up(T / 4)))


def default_block(T: int, D: int) -> tuple[int, int]:
    return min(T, max(2, _half_up(T / 8))), min(D, max(1, _half_up(D / 8)))


@dataclass(frozen=True)
class GrindSpec:
    pattern: str
    rate: float
    seed: int = 0
    seq_len: Optional[int] = None
    block_len: Optional[int] = None
    block_width: Optional[int] = None

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown missing pattern {self.pattern!r}; expected one of {PATTERNS}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate must lie in [0, 1], got {self.rate}")

    def label(self) -> str:
        return f"{self.pattern}{self.rate:g}"


def _check_rate(rate: float) -> None:
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1], got {rate}")


def _ground(samples: SampleSet, removed: np.ndarray) -> GroundSet:
    keep = samples.mask.astype(bool) & ~removed
    values = np.where(keep, samples.values, MISSING)
    truth = np.where(removed, samples.values, MISSING)
    return GroundSet(SampleSet(values, keep.astype(np.uint8)), removed.astype(np.uint8), truth)


def grind_point(samples: SampleSet, rate: float, seed: int, purpose: str = "") -> GroundSet:
    """Remove ``k`` observed cells drawn uniformly without replacement, pooled over all samples."""
    _check_rate(rate)
    flat_obs = np.flatnonzero(samples.mask.ravel())
    k = target_count(rate, flat_obs.size)
    rng = substream(seed, "grind", "point", purpose)
    chosen = flat_obs[rng.permutation(flat_obs.size)[:k]]
    removed = np.zeros(samples.mask.size, dtype=bool)
    removed[chosen] = True
    return _ground(samples, removed.reshape(samples.shape))


def grind_subsequence(samples: SampleSet, rate: float, seq_len: int, seed: int, purpose: str = "") -> GroundSet:
    """Remove contiguous per-channel runs of ``seq_len`` steps until exactly ``k`` cells are gone.

    A run starts at a uniform step of a uniformly drawn channel (among those
    with cells left); cells already missing are skipped, and the last run is
    cut short to land on ``k``.
    """
    _check_rate(rate)
    N, T, D = samples.shape
    if not 2 <= seq_len <= T:
        raise ValueError(f"seq_len must lie in [2, {T}], got {seq_len}")
    avail = samples.mask.astype(bool).transpose(0, 2, 1).reshape(N * D, T).copy()
    removed = np.zeros_like(avail)
    k = target_count(rate, int(avail.sum()))
    rng = substream(seed, "grind", "subsequence", purpose)
    left = avail.sum(axis=1)
    alive = np.flatnonzero(left)
    count = 0
    while count < k:
        ch = alive[rng.integers(alive.size)]
        start = int(rng.integers(T - seq_len + 1))
        hits = start + np.flatnonzero(avail[ch, start : start + seq_len])
        hits = hits[: k - count]
        if hits.size:
            avail[ch, hits] = False
            removed[ch, hits] = True
            count += hits.size
            left[ch] -= hits.size
            if left[ch] == 0:
                alive = np.flatnonzero(left)
    removed = removed.reshape(N, D, T).transpose(0, 2, 1)
    return _ground(samples, np.ascontiguousarray(removed))


def grind_block(samples: SampleSet, rate: float, block_len: int, block_width: int, seed: int,
                purpose: str = "") -> GroundSet:
    """Remove ``block_len x block_width`` (steps x features) rectangles until exactly ``k`` cells are gone.

    Anchors are uniform within a uniformly drawn sample. Cells the final
    rectangle removed beyond ``k`` are restored uniformly at random.
    """
    _check_rate(rate)
    N, T, D = samples.shape
    if not 1 <= block_len <= T:
        raise ValueError(f"block_len must lie in [1, {T}], got {block_len}")
    if not 1 <= block_width <= D:
        raise ValueError(f"block_width must lie in [1, {D}], got {block_width}")
    avail = samples.mask.astype(bool).copy()
    removed = np.zeros_like(avail)
    k = target_count(rate, int(avail.sum()))
    rng = substream(seed, "grind", "block", purpose)
    left = avail.reshape(N, -1).sum(axis=1)
    alive = np.flatnonzero(left)
    count = 0
    while count < k:
        n = alive[rng.integers(alive.size)]
        t0 = int(rng.integers(T - block_len + 1))
        d0 = int(rng.integers(D - block_width + 1))
        window = avail[n, t0 : t0 + block_len, d0 : d0 + block_width]
        tt, dd = np.nonzero(window)
        if tt.size == 0:
            continue
        tt, dd = tt + t0, dd + d0
        excess = count + tt.size - k
        if excess > 0:
            keep = np.sort(rng.permutation(tt.size)[: tt.size - excess])
            tt, dd = tt[keep], dd[keep]
        avail[n, tt, dd] = False
        removed[n, tt, dd] = True
        count += tt.size
        left[n] -= tt.size
        if left[n] == 0:
            alive = np.flatnonzero(left)
    return _ground(samples, removed)


def grind(samples: SampleSet, spec: GrindSpec, purpose: str = "") -> GroundSet:
    """Apply ``spec`` to ``samples``; ``purpose`` keys the random stream (e.g. the split name)."""
    T, D = samples.seq_len, samples.n_features
    if spec.pattern == "point":
        return grind_point(samples, spec.rate, spec.seed, purpose)
    if spec.pattern == "subsequence":
        seq_len = spec.seq_len if spec.seq_len is not None else default_seq_len(T)
        return grind_subsequence(samples, spec.rate, seq_len, spec.seed, purpose)
    bl, bw = default_block(T, D)
    return grind_block(
        samples,
        spec.rate,
        spec.block_len if spec.block_len is not None else bl,
        spec.block_width if spec.block_width is not None else bw,
        spec.seed,
        purpose,
    )


def realized_rate(ground: GroundSet) -> float:
    """Share of all cells missing after grinding (original plus artificial gaps)."""
    return 1.0 - ground.corrupted.mask.mean()


def save_ground(ground: GroundSet, spec: GrindSpec, path) -> None:
    """Store a ground set as ``.npz``: values, mask, indicating mask, truth and the ``GrindSpec`` as JSON."""
    np.savez(
        path,
        values=ground.corrupted.values,
        mask=ground.corrupted.mask,
        indicating_mask=ground.indicating_mask,
        truth=ground.truth,
        spec=np.array(json.dumps(asdict(spec), sort_keys=True)),
    )


def load_ground(path) -> tuple[GroundSet, GrindSpec]:
    with np.load(path, allow_pickle=False) as z:
        spec = GrindSpec(**json.loads(str(z["spec"])))
        corrupted = SampleSet(z["values"], z["mask"])
        return GroundSet(corrupted, z["indicating_mask"], z["truth"]), spec
