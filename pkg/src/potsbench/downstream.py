"""Downstream tasks on imputed samples: regression, forecasting and binary classification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import SampleSet
from .metrics import MetricReport, masked_report, pr_auc, roc_auc

TASKS = ("classification", "regression", "forecasting")


@dataclass(frozen=True)
class TaskSpec:
    task: str
    target_feature: Optional[str] = None
    horizon: int = 5
    model: str = "ridge"
    ridge_lambda: float = 1.0
    lr: float = 0.1
    epochs: int = 500

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown downstream task {self.task!r}; expected one of {TASKS}")
        if self.model not in ("ridge", "logreg"):
            raise ValueError(f"unknown downstream model {self.model!r}")
        if self.task == "classification" and self.model != "logreg":
            raise ValueError("classification requires model = 'logreg'")
        if self.task != "classification" and self.model != "ridge":
            raise ValueError(f"{self.task} requires model = 'ridge'")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")


def build_task_dataset(imputed, labels, spec: TaskSpec, feature_names: Sequence[str] | None = None,
                       target_values=None):
    """Flatten ``[N, T, D]`` samples into a ``(features [N, F], targets [N, K])`` pair.

    * classification: all cells -> the labels
    * regression: every feature but the target -> the full target trajectory
    * forecasting: first ``T - horizon`` steps of the non-target features ->
      last ``horizon`` steps of the target

    ``target_values`` optionally supplies the target trajectories from a
    different tensor (e.g. the complete, unground series) than ``imputed``.
    """
    x = np.asarray(imputed, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"imputed tensor must be [N, T, D], got {x.shape}")
    N, T, D = x.shape
    if spec.task == "classification":
        if labels is None:
            raise ValueError("classification requires labels")
        y = np.asarray(labels, dtype=np.float64).reshape(N, -1)
        return x.reshape(N, T * D), y
    j = _target_index(spec, feature_names, D)
    source = x if target_values is None else np.asarray(target_values, dtype=np.float64)
    if source.shape != x.shape:
        raise ValueError("target_values must have the imputed tensor's shape")
    rest = np.delete(x, j, axis=2)
    if spec.task == "regression":
        return rest.reshape(N, -1), source[:, :, j].copy()
    if spec.horizon >= T:
        raise ValueError(f"horizon {spec.horizon} must be < sequence length {T}")
    return rest[:, : T - spec.horizon].reshape(N, -1), source[:, T - spec.horizon :, j].copy()


def _target_index(spec: TaskSpec, feature_names, D: int) -> int:
    if spec.target_feature is None:
        raise ValueError(f"{spec.task} requires a target feature")
    names = list(feature_names) if feature_names is not None else [str(d) for d in range(D)]
    if spec.target_feature not in names:
        raise ValueError(f"target feature {spec.target_feature!r} not in {names}")
    if D < 2:
        raise ValueError("need at least one non-target feature")
    return names.index(spec.target_feature)


def no_imputation_features(corrupted: SampleSet, spec: TaskSpec, feature_names=None, labels=None,
                           target_values=None):
    """Baseline without imputation: missing cells zero-filled, the mask appended as extra features."""
    filled = corrupted.zero_filled()
    feats, targets = build_task_dataset(filled, labels, spec, feature_names, target_values)
    mask_feats, _ = build_task_dataset(corrupted.mask.astype(np.float64), labels, spec, feature_names,
                                       target_values if target_values is not None else filled)
    return np.concatenate([feats, mask_feats], axis=1), targets


@dataclass
class RidgeModel:
    weights: np.ndarray  # [F, K]
    intercept: np.ndarray  # [K]

    def predict(self, features) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weights + self.intercept


def fit_ridge(features, targets, lam: float = 1.0, min_norm: bool = True) -> RidgeModel:
    """Closed-form ridge per target column with an unpenalized intercept.

    At ``lam == 0`` a rank-deficient design gets the minimum-norm
    least-squares solution; with ``min_norm=False`` it is rejected instead.
    """
    X = np.asarray(features, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[0] != Y.shape[0] or X.shape[0] < 1:
        raise ValueError(f"features {X.shape} and targets {Y.shape} are incompatible")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    x_mean, y_mean = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - x_mean, Y - y_mean
    if lam == 0:
        rank = np.linalg.matrix_rank(Xc) if Xc.size else 0
        if rank < X.shape[1] and not min_norm:
            raise ValueError("singular normal matrix at lambda = 0; set lambda > 0")
        W = np.linalg.lstsq(Xc, Yc, rcond=None)[0]
    else:
        F = X.shape[1]
        if F <= X.shape[0]:
            W = np.linalg.solve(Xc.T @ Xc + lam * np.eye(F), Xc.T @ Yc)
        else:
            # dual form is cheaper when features outnumber samples
            W = Xc.T @ np.linalg.solve(Xc @ Xc.T + lam * np.eye(X.shape[0]), Yc)
    return RidgeModel(W, y_mean - x_mean @ W)


@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float
    loss_history: list

    def scores(self, features) -> np.ndarray:
        z = np.asarray(features, dtype=np.float64) @ self.weights + self.intercept
        return 1.0 / (1.0 + np.exp(-z))


def _logistic_loss(z: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def fit_logreg(features, labels, lr: float = 0.1, epochs: int = 500, seed: int = 0) -> LogisticModel:
    """Full-batch gradient descent on the mean logistic loss from zero weights.

    The optimisation is fully deterministic; ``seed`` is accepted for
    interface symmetry with the other trainable components.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"features {X.shape} and labels {y.shape} are incompatible")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary (0/1)")
    if y.min() == y.max():
        raise ValueError("logistic regression needs both classes")
    w, b = np.zeros(X.shape[1]), 0.0
    history = []
    n = X.shape[0]
    for _ in range(int(epochs)):
        z = X @ w + b
        history.append(_logistic_loss(z, y))
        r = 1.0 / (1.0 + np.exp(-z)) - y
        w = w - lr * (X.T @ r) / n
        b = b - lr * r.sum() / n
    return LogisticModel(w, b, history)


def evaluate_downstream(model, features, targets, spec: TaskSpec):
    """MetricReport for regression/forecasting; ``(roc_auc, pr_auc)`` for classification."""
    if spec.task == "classification":
        scores = model.scores(features)
        labels = np.asarray(targets).ravel()
        return roc_auc(scores, labels), pr_auc(scores, labels)
    pred = model.predict(features)
    targets = np.asarray(targets, dtype=np.float64).reshape(pred.shape)
    return masked_report(pred, targets, np.ones(pred.shape, dtype=np.uint8))


def fit_task(features, targets, spec: TaskSpec, seed: int = 0):
    if spec.task == "classification":
        return fit_logreg(features, targets, spec.lr, spec.epochs, seed)
    return fit_ridge(features, targets, spec.ridge_lambda)


@dataclass(frozen=True)
class DownstreamResult:
    task: str
    imputed: object  # MetricReport or (roc, pr)
    baseline: object

    def flat(self) -> dict:
        out = {}
        for tag, val in (("imputed", self.imputed), ("baseline", self.baseline)):
            if isinstance(val, MetricReport):
                out[f"ds_{tag}_mae"] = val.mae
            else:
                out[f"ds_{tag}_roc_auc"], out[f"ds_{tag}_pr_auc"] = val
        return out


def run_downstream(spec: TaskSpec, train_imputed, train_corrupted: SampleSet, test_imputed,
                   test_corrupted: SampleSet, feature_names, train_labels=None, test_labels=None,
                   train_target=None, test_target=None, seed: int = 0) -> DownstreamResult:
    """Fit on the training split and score on test, for imputed inputs and the no-imputation baseline."""
    Xtr, Ytr = build_task_dataset(train_imputed, train_labels, spec, feature_names, train_target)
    Xte, Yte = build_task_dataset(test_imputed, test_labels, spec, feature_names, test_target)
    imputed = evaluate_downstream(fit_task(Xtr, Ytr, spec, seed), Xte, Yte, spec)
    Btr, Ytr_b = no_imputation_features(train_corrupted, spec, feature_names, train_labels,
                                        train_target if train_target is not None else train_imputed)
    Bte, Yte_b = no_imputation_features(test_corrupted, spec, feature_names, test_labels,
                                        test_target if test_target is not None else test_imputed)
    baseline = evaluate_downstream(fit_task(Btr, Ytr_b, spec, seed), Bte, Yte_b, spec)
    return DownstreamResult(spec.task, imputed, baseline)
