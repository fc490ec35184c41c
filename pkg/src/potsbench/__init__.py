"""Benchmark harness for time-series imputation."""

from .core import GroundSet, SampleSet, combine, mask_from_missing
from .grinder import GrindSpec, grind
from .imputers import ImputerSpec
from .pipeline import DatasetRecipe, ett_h1_recipe, prepare

__version__ = "0.1.0"

__all__ = [
    "DatasetRecipe",
    "GrindSpec",
    "GroundSet",
    "ImputerSpec",
    "SampleSet",
    "combine",
    "ett_h1_recipe",
    "grind",
    "mask_from_missing",
    "prepare",
]
