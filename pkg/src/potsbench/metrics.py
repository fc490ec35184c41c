"""Masked imputation errors and binary ranking metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    """The metric has no value for this input (empty mask, zero denominator, one class)."""


@dataclass(frozen=True)
class MetricReport:
    mae: float
    mse: float
    mre: float
    n_evaluated: int


def _pairwise_sum(x: np.ndarray) -> float:
    # numpy's add.reduce over a contiguous 1-D buffer is already pairwise; ravel() pins that layout
    return float(np.add.reduce(np.ascontiguousarray(x).ravel()))


def masked_error(kind: str, y_hat, y, m) -> float:
    """MAE, MSE or MRE restricted to the cells where ``m`` is 1.

    mae = sum|(y_hat - y) m| / sum m
    mse = sum((y_hat - y) m)^2 / sum m
    mre = sum|(y_hat - y) m| / sum|y m|
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m = np.asarray(m)
    if not (y_hat.shape == y.shape == m.shape):
        raise ValueError(f"shape mismatch: {y_hat.shape}, {y.shape}, {m.shape}")
    sel = m.astype(bool)
    n = int(sel.sum())
    if n == 0:
        raise UndefinedMetricError("empty evaluation mask")
    # NaN markers outside the mask must not poison the sums, so select instead of multiplying
    diff = y_hat[sel] - y[sel]
    if kind == "mae":
        return _pairwise_sum(np.abs(diff)) / n
    if kind == "mse":
        return _pairwise_sum(diff * diff) / n
    if kind == "mre":
        denom = _pairwise_sum(np.abs(y[sel]))
        if denom == 0:
            raise UndefinedMetricError("MRE denominator sum|y * m| is zero")
        return _pairwise_sum(np.abs(diff)) / denom
    raise ValueError(f"unknown metric kind {kind!r}")


def masked_report(y_hat, y, m) -> MetricReport:
    return MetricReport(
        mae=masked_error("mae", y_hat, y, m),
        mse=masked_error("mse", y_hat, y, m),
        mre=masked_error("mre", y_hat, y, m),
        n_evaluated=int(np.asarray(m).astype(bool).sum()),
    )


def _binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary (0/1)")
    return scores, labels.astype(bool)


def roc_auc(scores, labels) -> float:
    """P(score of a random positive > score of a random negative), ties counted 1/2."""
    scores, labels = _binary(scores, labels)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC needs both classes")
    # midranks give the Mann-Whitney U statistic with ties split evenly
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def pr_auc(scores, labels) -> float:
    """Average precision: mean precision at the rank of each positive.

    Samples are ordered by descending score with a stable sort, so tied
    scores keep their input order.
    """
    scores, labels = _binary(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("PR AUC needs at least one positive label")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(precision[hits].sum() / n_pos)
