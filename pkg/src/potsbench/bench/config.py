"""Experiment plans and their TOML configuration files.

A config has four kinds of sections::

    [dataset.<name>]    recipe = "ett_h1" | path/window/fractions|boundaries/target/label
    [grind.<name>]      pattern, rate, [seq_len | block_len, block_width]
    [imputer.<name>]    kind, plus hyperparameters for trainable kinds
    [downstream.<name>] task, target_feature, horizon, model, ridge_lambda, lr, epochs
    [run]               seeds (required), output, format, workers, grind_splits

Relative dataset and output paths resolve against the config file's directory.
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..downstream import TaskSpec
from ..grinder import PATTERNS, GrindSpec
from ..imputers import DEFAULT_HYPERPARAMETERS, KINDS, ImputerSpec
from ..pipeline import BUILTIN_RECIPES, DatasetRecipe

SPLITS = ("train", "val", "test")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Cell:
    dataset: DatasetRecipe
    grind: GrindSpec
    grind_name: str
    imputer: ImputerSpec
    seed: int
    downstream: tuple = ()
    grind_splits: tuple = SPLITS

    @property
    def key(self) -> tuple:
        return (self.dataset.name, self.grind_name, self.imputer.name, self.seed)


@dataclass(frozen=True)
class ExperimentPlan:
    recipes: tuple
    grinds: tuple  # (name, GrindSpec) pairs
    imputers: tuple
    seeds: tuple
    downstream: tuple = ()
    output: Optional[str] = None
    format: str = "csv"
    workers: Optional[int] = None
    grind_splits: tuple = SPLITS

    def __post_init__(self):
        for name in ("recipes", "grinds", "imputers", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"plan needs at least one entry in {name}")

    @property
    def n_cells(self) -> int:
        return len(self.recipes) * len(self.grinds) * len(self.imputers) * len(self.seeds)

    def cells(self) -> list[Cell]:
        """All cells in lexicographic (dataset, grind, imputer, seed) order."""
        out = []
        for rec, (gname, g), imp, seed in itertools.product(self.recipes, self.grinds, self.imputers, self.seeds):
            spec = GrindSpec(g.pattern, g.rate, seed, g.seq_len, g.block_len, g.block_width)
            out.append(Cell(rec, spec, gname, imp, seed, tuple(self.downstream), self.grind_splits))
        return sorted(out, key=lambda c: c.key)


_DATASET_KEYS = {"recipe", "path", "window", "fractions", "boundaries", "target", "label", "drop_final_window"}
_GRIND_KEYS = {"pattern", "rate", "seq_len", "block_len", "block_width"}
_DOWNSTREAM_KEYS = {"task", "target_feature", "horizon", "model", "ridge_lambda", "lr", "epochs"}
_RUN_KEYS = {"seeds", "output", "format", "workers", "grind_splits"}
_HP_TYPES = {k: type(v) for k, v in DEFAULT_HYPERPARAMETERS.items()}


def _expect(value, types, path: str):
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{path}: expected {types}, got bool")
    if not isinstance(value, types):
        raise ConfigError(f"{path}: expected {getattr(types, '__name__', types)}, got {type(value).__name__}")
    return value


def _check_keys(table: dict, allowed: set, prefix: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key {prefix}.{key}")


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    for sub, table in sec.items():
        if not isinstance(table, dict):
            raise ConfigError(f"{name}.{sub} must be a table")
    return sec


def _dataset(name: str, t: dict, base: Path) -> DatasetRecipe:
    p = f"dataset.{name}"
    _check_keys(t, _DATASET_KEYS, p)

    def resolve(raw: str) -> str:
        path = Path(raw)
        return str(path if path.is_absolute() else base / path)

    if "recipe" in t:
        recipe = _expect(t["recipe"], str, f"{p}.recipe")
        if recipe not in BUILTIN_RECIPES:
            raise ConfigError(f"{p}.recipe: unknown built-in recipe {recipe!r}")
        extra = set(t) - {"recipe", "path"}
        if extra:
            raise ConfigError(f"{p}: keys {sorted(extra)} cannot be combined with a built-in recipe")
        path = resolve(_expect(t["path"], str, f"{p}.path")) if "path" in t else None
        rec = BUILTIN_RECIPES[recipe](path)
        return replace(rec, name=name)
    for key in ("path", "window"):
        if key not in t:
            raise ConfigError(f"{p}.{key} required")
    kwargs = {
        "name": name,
        "path": resolve(_expect(t["path"], str, f"{p}.path")),
        "window": _expect(t["window"], int, f"{p}.window"),
    }
    if "fractions" in t:
        fr = _expect(t["fractions"], list, f"{p}.fractions")
        kwargs["fractions"] = tuple(float(_expect(x, (int, float), f"{p}.fractions")) for x in fr)
    if "boundaries" in t:
        kwargs["boundaries"] = tuple(str(x) for x in _expect(t["boundaries"], list, f"{p}.boundaries"))
    if "fractions" not in t and "boundaries" not in t:
        kwargs["fractions"] = (0.6, 0.2, 0.2)
    for key in ("target", "label"):
        if key in t:
            kwargs[key] = _expect(t[key], str, f"{p}.{key}")
    if "drop_final_window" in t:
        kwargs["drop_final_window"] = _expect(t["drop_final_window"], bool, f"{p}.drop_final_window")
    try:
        return DatasetRecipe(**kwargs)
    except ValueError as e:
        raise ConfigError(f"{p}: {e}") from None


def _grind(name: str, t: dict) -> GrindSpec:
    p = f"grind.{name}"
    _check_keys(t, _GRIND_KEYS, p)
    for key in ("pattern", "rate"):
        if key not in t:
            raise ConfigError(f"{p}.{key} required")
    pattern = _expect(t["pattern"], str, f"{p}.pattern")
    if pattern not in PATTERNS:
        raise ConfigError(f"{p}.pattern: unknown missing pattern {pattern!r}")
    rate = float(_expect(t["rate"], (int, float), f"{p}.rate"))
    opts = {k: _expect(t[k], int, f"{p}.{k}") for k in ("seq_len", "block_len", "block_width") if k in t}
    try:
        return GrindSpec(pattern, rate, 0, **opts)
    except ValueError as e:
        raise ConfigError(f"{p}: {e}") from None


def _imputer(name: str, t: dict) -> ImputerSpec:
    p = f"imputer.{name}"
    if "kind" not in t:
        raise ConfigError(f"{p}.kind required")
    kind = _expect(t["kind"], str, f"{p}.kind")
    if kind not in KINDS:
        raise ConfigError(f"{p}.kind: unknown imputer kind {kind!r}")
    hp = {k: v for k, v in t.items() if k != "kind"}
    for key, value in hp.items():
        if key not in _HP_TYPES:
            raise ConfigError(f"unknown key {p}.{key}")
        want = _HP_TYPES[key]
        if want is float:
            hp[key] = float(_expect(value, (int, float), f"{p}.{key}"))
        else:
            _expect(value, want, f"{p}.{key}")
    try:
        return ImputerSpec(kind, hp, name)
    except ValueError as e:
        raise ConfigError(f"{p}: {e}") from None


def _downstream(name: str, t: dict) -> TaskSpec:
    p = f"downstream.{name}"
    _check_keys(t, _DOWNSTREAM_KEYS, p)
    if "task" not in t:
        raise ConfigError(f"{p}.task required")
    kwargs = dict(t)
    if "model" not in kwargs:
        kwargs["model"] = "logreg" if t["task"] == "classification" else "ridge"
    try:
        return TaskSpec(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{p}: {e}") from None


def parse_config(text: str, base_dir=".") -> ExperimentPlan:
    """Validate a TOML config and turn it into an :class:`ExperimentPlan`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed config: {e}") from None
    base = Path(base_dir)
    for top in doc:
        if top not in ("dataset", "grind", "imputer", "downstream", "run"):
            raise ConfigError(f"unknown section [{top}]")

    recipes = tuple(_dataset(n, t, base) for n, t in _section(doc, "dataset").items())
    grinds = tuple((n, _grind(n, t)) for n, t in _section(doc, "grind").items())
    imputers = tuple(_imputer(n, t) for n, t in _section(doc, "imputer").items())
    downstream = tuple(_downstream(n, t) for n, t in _section(doc, "downstream").items())
    if not recipes:
        raise ConfigError("at least one [dataset.*] section required")
    if not grinds:
        raise ConfigError("at least one [grind.*] section required")
    if not imputers:
        raise ConfigError("at least one [imputer.*] section required")

    run = doc.get("run")
    if not isinstance(run, dict):
        raise ConfigError("[run] section required")
    _check_keys(run, _RUN_KEYS, "run")
    if "seeds" not in run:
        raise ConfigError("run.seeds required")
    seeds = _expect(run["seeds"], list, "run.seeds")
    if not seeds:
        raise ConfigError("run.seeds must not be empty")
    seeds = tuple(_expect(s, int, "run.seeds") for s in seeds)
    if len(set(seeds)) != len(seeds):
        raise ConfigError("run.seeds contains duplicates")
    fmt = _expect(run.get("format", "csv"), str, "run.format")
    if fmt not in ("csv", "jsonl"):
        raise ConfigError(f"run.format must be 'csv' or 'jsonl', got {fmt!r}")
    output = run.get("output")
    if output is not None:
        output = _expect(output, str, "run.output")
        output = str(Path(output) if Path(output).is_absolute() else base / output)
    workers = run.get("workers")
    if workers is not None and _expect(workers, int, "run.workers") < 1:
        raise ConfigError("run.workers must be >= 1")
    splits = tuple(_expect(run.get("grind_splits", list(SPLITS)), list, "run.grind_splits"))
    if "test" not in splits or not set(splits) <= set(SPLITS):
        raise ConfigError(f"run.grind_splits must include 'test' and only name {SPLITS}")

    return ExperimentPlan(recipes, grinds, imputers, seeds, downstream, output, fmt, workers,
                          tuple(s for s in SPLITS if s in splits))


def load_config(path) -> ExperimentPlan:
    path = Path(path)
    return parse_config(path.read_text(), path.parent)
