"""Experiment records: CSV/JSONL persistence and the plain-text summary table."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

CSV_FIELDS = (
    "dataset", "pattern", "rate", "imputer", "seed", "status",
    "mae", "mse", "mre", "fit_time_s", "infer_time_s", "n_params",
)
METRIC_FIELDS = ("mae", "mse", "mre")


@dataclass
class ExperimentRecord:
    dataset: str
    pattern: str
    rate: float
    imputer: str
    seed: int
    status: str = "ok"
    mae: Optional[float] = None
    mse: Optional[float] = None
    mre: Optional[float] = None
    fit_time_s: float = 0.0
    infer_time_s: float = 0.0
    n_params: int = 0
    downstream: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def metrics(self) -> tuple:
        return tuple(getattr(self, k) for k in METRIC_FIELDS)


def _fmt(value) -> str:
    return "" if value is None else f"{value:.6f}"


def csv_row(rec: ExperimentRecord) -> list[str]:
    return [
        rec.dataset, rec.pattern, repr(float(rec.rate)), rec.imputer, str(rec.seed), rec.status,
        _fmt(rec.mae), _fmt(rec.mse), _fmt(rec.mre),
        _fmt(rec.fit_time_s), _fmt(rec.infer_time_s), str(rec.n_params),
    ]


def write_results(records, path, format: str = "csv") -> None:
    """Write records as CSV (fixed header, 6-decimal metrics) or JSONL (one object per line)."""
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        if format == "csv":
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_FIELDS)
                for rec in records:
                    w.writerow(csv_row(rec))
        elif format == "jsonl":
            with path.open("w") as fh:
                for rec in records:
                    fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
        else:
            raise ValueError(f"unknown results format {format!r}")
    except OSError as e:
        raise OSError(f"cannot write results to {path}: {e}") from e


def _opt_float(text: str) -> Optional[float]:
    return None if text == "" else float(text)


def read_results(path) -> list[ExperimentRecord]:
    path = Path(path)
    if path.suffix == ".jsonl":
        with path.open() as fh:
            return [ExperimentRecord(**json.loads(line)) for line in fh if line.strip()]
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_FIELDS:
            raise ValueError(f"{path}: header does not match {','.join(CSV_FIELDS)}")
        out = []
        for row in reader:
            d = dict(zip(CSV_FIELDS, row))
            out.append(ExperimentRecord(
                dataset=d["dataset"], pattern=d["pattern"], rate=float(d["rate"]), imputer=d["imputer"],
                seed=int(d["seed"]), status=d["status"],
                mae=_opt_float(d["mae"]), mse=_opt_float(d["mse"]), mre=_opt_float(d["mre"]),
                fit_time_s=float(d["fit_time_s"]), infer_time_s=float(d["infer_time_s"]),
                n_params=int(d["n_params"]),
            ))
        return out


def summarize(records) -> str:
    """MAE mean +/- population std over seeds per (dataset, pattern, rate, imputer).

    Within each (dataset, pattern, rate) group the imputer with the lowest
    mean MAE is flagged with ``*``.
    """
    groups = defaultdict(list)
    for rec in records:
        if rec.ok:
            groups[(rec.dataset, rec.pattern, float(rec.rate), rec.imputer)].append(rec.mae)
    if not groups:
        raise ValueError("no successful records to summarize")
    stats = {k: (float(np.mean(v)), float(np.std(v)), len(v)) for k, v in groups.items()}
    best = {}
    for (ds, pat, rate, imp), (mean, _, _) in sorted(stats.items()):
        col = (ds, pat, rate)
        if col not in best or mean < best[col][1]:
            best[col] = (imp, mean)

    header = f"{'dataset':<16} {'pattern':<12} {'rate':>5} {'imputer':<16} {'MAE mean':>9} {'std':>7} {'n':>3}"
    lines = [header, "-" * len(header)]
    for key in sorted(stats):
        ds, pat, rate, imp = key
        mean, std, n = stats[key]
        flag = " *" if best[(ds, pat, rate)][0] == imp else ""
        lines.append(f"{ds:<16} {pat:<12} {rate:>5.2f} {imp:<16} {mean:>9.3f} {std:>7.3f} {n:>3}{flag}")
    return "\n".join(lines)
