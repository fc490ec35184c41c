"""Command-line entry point: ``potsbench {run,summarize,hpo,grind}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench.config import ConfigError, load_config
from .bench.hpo import DEFAULT_SPACE, Objective, random_search
from .bench.results import read_results, summarize, write_results
from .bench.runner import grind_splits, load_prepared, resolve_workers, run_plan
from .grinder import realized_rate, save_ground


def _cmd_run(args) -> int:
    plan = load_config(args.config)
    workers = resolve_workers(args.workers, plan)
    output = args.output or plan.output
    fmt = args.format or plan.format
    if output is None:
        raise ConfigError("no output path: set run.output or pass --output")
    records = run_plan(plan, workers)
    write_results(records, output, fmt)
    n_ok = sum(r.ok for r in records)
    print(f"{n_ok}/{len(records)} cells ok -> {output}")
    for r in records:
        if not r.ok:
            print(f"  {r.dataset} {r.pattern} {r.rate:g} {r.imputer} seed={r.seed}: {r.status}", file=sys.stderr)
    return 0 if n_ok == len(records) else 1


def _cmd_summarize(args) -> int:
    print(summarize(read_results(args.results)))
    return 0


def _pick(items, name, what):
    if name is None:
        return items[0]
    for item in items:
        if (item[0] if isinstance(item, tuple) else item.name) == name:
            return item
    raise ConfigError(f"no {what} named {name!r}")


def _cmd_hpo(args) -> int:
    plan = load_config(args.config)
    recipe = _pick(plan.recipes, args.dataset, "dataset")
    _, gspec = _pick(plan.grinds, args.grind, "grind")
    seed = args.seed if args.seed is not None else plan.seeds[0]
    base = {}
    trainable = [i for i in plan.imputers if i.trainable]
    if trainable:
        base = dict(trainable[0].hyperparameters)
    for key in DEFAULT_SPACE:
        base.pop(key, None)
    objective = Objective(load_prepared(recipe), gspec, seed, base)
    result = random_search(DEFAULT_SPACE, args.budget, objective, seed)
    for i, (point, score) in enumerate(result.trials):
        print(f"trial {i:3d}  val_mae={score:.6f}  {json.dumps(point, sort_keys=True)}")
    print(f"best val_mae={result.best_score:.6f}")
    print("[imputer.adapted_linear_hpo]")
    print('kind = "adapted_linear"')
    for key, value in sorted(result.best.hyperparameters.items()):
        print(f"{key} = {json.dumps(value)}")
    return 0


def _cmd_grind(args) -> int:
    plan = load_config(args.config)
    seed = plan.seeds[0]
    for cell in plan.cells():
        if cell.seed != seed or cell.imputer != plan.imputers[0]:
            continue
        grounds = grind_splits(load_prepared(cell.dataset), cell)
        for split, g in grounds.items():
            if args.save:
                out = Path(args.save)
                out.mkdir(parents=True, exist_ok=True)
                save_ground(g, cell.grind, out / f"{cell.dataset.name}_{cell.grind_name}_{split}.npz")
            print(f"{cell.dataset.name:<12} {cell.grind_name:<14} {split:<5} "
                  f"samples={g.shape[0]:<5} removed={g.n_indicated:<7} missing_rate={realized_rate(g):.4%}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="potsbench", description="Time-series imputation benchmark runner.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a plan and write results")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--output", default=None)
    p.add_argument("--format", choices=("csv", "jsonl"), default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("summarize", help="MAE table from a results file")
    p.add_argument("results")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("hpo", help="random search for the adapted-linear imputer")
    p.add_argument("config")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--grind", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_hpo)

    p = sub.add_parser("grind", help="simulate missingness and report realized rates")
    p.add_argument("config")
    p.add_argument("--inspect", action="store_true", required=True)
    p.add_argument("--save", default=None, metavar="DIR", help="also write each ground set as .npz")
    p.set_defaults(func=_cmd_grind)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
