"""Random-search hyperparameter optimisation for the trainable imputer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..core import GroundSet
from ..grinder import GrindSpec, grind
from ..imputers import ImputerSpec, fit_adapted_linear, validation_mae
from ..pipeline import PreparedDataset
from ..rng import substream

# name -> ("log", lo, hi) | ("uniform", lo, hi) | ("int", lo, hi) | ("choice", [options])
DEFAULT_SPACE = {
    "lr": ("log", 1e-4, 1e-2),
    "batch_size": ("choice", [16, 32, 64]),
    "mit_rate": ("uniform", 0.1, 0.3),
    "ma_window": ("int", 3, 49),
    "w_mit": ("uniform", 0.5, 2.0),
}


def sample_point(space: dict, rng) -> dict:
    point = {}
    for name in sorted(space):
        kind, *args = space[name]
        if kind == "log":
            lo, hi = args
            point[name] = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        elif kind == "uniform":
            point[name] = float(rng.uniform(*args))
        elif kind == "int":
            lo, hi = args
            point[name] = int(rng.integers(lo, hi + 1))
        elif kind == "choice":
            (options,) = args
            point[name] = options[int(rng.integers(len(options)))]
        else:
            raise ValueError(f"unknown range kind {kind!r} for {name!r}")
    return point


@dataclass
class Objective:
    """Validation MAE of the adapted-linear imputer on one (dataset, grind, seed) cell."""

    data: PreparedDataset
    grind_spec: GrindSpec
    seed: int
    base: dict = field(default_factory=dict)
    _grounds: tuple = field(default=None, init=False, repr=False)

    def grounds(self) -> tuple[GroundSet, GroundSet]:
        if self._grounds is None:
            spec = GrindSpec(self.grind_spec.pattern, self.grind_spec.rate, self.seed, self.grind_spec.seq_len,
                             self.grind_spec.block_len, self.grind_spec.block_width)
            self._grounds = (grind(self.data.train, spec, f"{self.data.name}/train"),
                             grind(self.data.val, spec, f"{self.data.name}/val"))
        return self._grounds

    def spec(self, point: dict) -> ImputerSpec:
        return ImputerSpec("adapted_linear", {**self.base, **point})

    def __call__(self, point: dict) -> float:
        train, val = self.grounds()
        model = fit_adapted_linear(train, val, self.spec(point), self.seed)
        return validation_mae(model.params, val)


@dataclass
class SearchResult:
    best: ImputerSpec
    best_score: float
    trials: list  # (point, score) in trial order


def random_search(space: dict, budget: int, objective, seed: int) -> SearchResult:
    """Evaluate ``budget`` independent draws from ``space``; return the argmin (earliest trial on ties)."""
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    trials = []
    best_i = 0
    for i in range(budget):
        point = sample_point(space, substream(seed, "hpo", i))
        score = float(objective(point))
        trials.append((point, score))
        if score < trials[best_i][1]:
            best_i = i
    point, score = trials[best_i]
    spec = objective.spec(point) if hasattr(objective, "spec") else ImputerSpec("adapted_linear", point)
    return SearchResult(spec, score, trials)
