"""Run experiment cells: load, grind, impute, score, and optionally evaluate downstream."""

from __future__ import annotations

import functools
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..downstream import run_downstream
from ..grinder import GrindSpec, grind
from ..imputers import fit_adapted_linear, run_imputer
from ..metrics import masked_report
from ..pipeline import DatasetRecipe, PreparedDataset, prepare
from .config import Cell, ExperimentPlan
from .results import ExperimentRecord

logger = logging.getLogger(__name__)

WORKERS_ENV = "POTSBENCH_WORKERS"


@functools.lru_cache(maxsize=8)
def load_prepared(recipe: DatasetRecipe) -> PreparedDataset:
    return prepare(recipe)


def grind_splits(data: PreparedDataset, cell: Cell) -> dict:
    """Ground sets for train/val/test; splits not listed in the cell stay intact."""
    out = {}
    for split in ("train", "val", "test"):
        samples = getattr(data, split)
        if split in cell.grind_splits:
            out[split] = grind(samples, cell.grind, purpose=f"{data.name}/{split}")
        else:
            out[split] = grind(samples, GrindSpec("point", 0.0, cell.seed), purpose=f"{data.name}/{split}")
    return out


def _targets(ground, imputed) -> np.ndarray:
    """Pre-grind values as regression targets; cells missing before grinding take the imputation."""
    original = ground.original().values
    return np.where(np.isnan(original), imputed, original)


def run_cell(cell: Cell, data: PreparedDataset | None = None) -> ExperimentRecord:
    """Execute one cell; any failure is captured in the record's status."""
    rec = ExperimentRecord(cell.dataset.name, cell.grind.pattern, cell.grind.rate, cell.imputer.name, cell.seed)
    try:
        if data is None:
            data = load_prepared(cell.dataset)
        grounds = grind_splits(data, cell)
        model = None
        if cell.imputer.trainable:
            t0 = time.perf_counter()
            model = fit_adapted_linear(grounds["train"], grounds["val"], cell.imputer, cell.seed)
            rec.fit_time_s = time.perf_counter() - t0
            rec.n_params = model.n_params
        t0 = time.perf_counter()
        imputed = run_imputer(cell.imputer, grounds["test"], grounds["train"], model)
        rec.infer_time_s = time.perf_counter() - t0
        test = grounds["test"]
        report = masked_report(imputed, test.truth, test.indicating_mask)
        rec.mae, rec.mse, rec.mre = report.mae, report.mse, report.mre
        if cell.downstream:
            train_imp = run_imputer(cell.imputer, grounds["train"], grounds["train"], model)
            train_target, test_target = _targets(grounds["train"], train_imp), _targets(test, imputed)
        for i, task in enumerate(cell.downstream):
            res = run_downstream(
                task, train_imp, grounds["train"].corrupted, imputed, test.corrupted, data.feature_names,
                data.labels.get("train"), data.labels.get("test"), train_target, test_target, cell.seed,
            )
            rec.downstream[f"{i}:{task.task}"] = res.flat()
    except Exception as e:  # noqa: BLE001 - a failing cell must not abort its siblings
        logger.debug("cell %s failed", cell.key, exc_info=True)
        rec.status = f"failed({e})"
        rec.mae = rec.mse = rec.mre = None
    return rec


def resolve_workers(flag: int | None, plan: ExperimentPlan) -> int:
    """Worker count: command-line flag, then environment, then config, then 1.

    Overriding a value set in the config is logged, never silent.
    """
    env = os.environ.get(WORKERS_ENV)
    chosen, source = plan.workers, "config"
    if env:
        chosen, source = int(env), WORKERS_ENV
    if flag is not None:
        chosen, source = flag, "--workers"
    if plan.workers is not None and chosen != plan.workers:
        logger.warning("run.workers = %d in config overridden by %s = %d", plan.workers, source, chosen)
    return max(1, chosen or 1)


def run_plan(plan: ExperimentPlan, workers: int = 1) -> list[ExperimentRecord]:
    """One record per cell in lexicographic cell order, whatever the worker count."""
    cells = plan.cells()
    if workers <= 1:
        return [run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, cells))
