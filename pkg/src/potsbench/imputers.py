"""Imputation methods: Mean, Median, LOCF, Linear, and the trainable adapted-linear model."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import GroundSet, SampleSet, combine
from .metrics import masked_error
from .nn import PARAM_NAMES, AdamState, BackboneParams, Batch, adam_step, forward, gradient
from .rng import substream

logger = logging.getLogger(__name__)

NAIVE_KINDS = ("mean", "median", "locf", "linear")
TRAINABLE_KINDS = ("adapted_linear",)
KINDS = NAIVE_KINDS + TRAINABLE_KINDS

DEFAULT_HYPERPARAMETERS = {
    "lr": 1e-3,
    "batch_size": 32,
    "epochs": 200,
    "patience": 10,
    "mit_rate": 0.2,
    "w_ort": 1.0,
    "w_mit": 1.0,
    "ma_window": 25,
    "individual": False,
}


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ImputerSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown imputer kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in NAIVE_KINDS and self.hyperparameters:
            raise ValueError(f"imputer kind {self.kind!r} takes no hyperparameters")
        unknown = set(self.hyperparameters) - set(DEFAULT_HYPERPARAMETERS)
        if unknown:
            raise ValueError(f"unknown hyperparameters {sorted(unknown)}")
        if not self.name:
            object.__setattr__(self, "name", self.kind)

    @property
    def trainable(self) -> bool:
        return self.kind in TRAINABLE_KINDS

    def resolved(self) -> dict:
        return {**DEFAULT_HYPERPARAMETERS, **self.hyperparameters}


# -- naive methods ----------------------------------------------------------


def feature_statistic(source: SampleSet, kind: str) -> np.ndarray:
    """Per-feature mean or median of the observed cells (0 for a feature never observed)."""
    D = source.n_features
    vals = source.values.reshape(-1, D)
    obs = source.mask.reshape(-1, D).astype(bool)
    stat = np.zeros(D)
    for d in range(D):
        x = vals[obs[:, d], d]
        if x.size:
            stat[d] = x.mean() if kind == "mean" else np.median(x)
    return stat


def impute_constant_stat(ground: GroundSet, train_stats_source: SampleSet, kind: str) -> np.ndarray:
    if kind not in ("mean", "median"):
        raise ValueError(f"kind must be 'mean' or 'median', got {kind!r}")
    if train_stats_source.n_features != ground.corrupted.n_features:
        raise ValueError("statistics source and ground set differ in feature count")
    stat = feature_statistic(train_stats_source, kind)
    return combine(ground.corrupted, np.broadcast_to(stat, ground.shape))


def _neighbours(mask: np.ndarray):
    """Index of the nearest observed step at-or-before / at-or-after each step (-1 / T if none)."""
    obs = mask.astype(bool)
    T = obs.shape[1]
    t = np.arange(T)[None, :, None]
    prev = np.maximum.accumulate(np.where(obs, t, -1), axis=1)
    nxt = np.minimum.accumulate(np.where(obs, t, T)[:, ::-1], axis=1)[:, ::-1]
    return prev, nxt


def impute_locf(ground: GroundSet) -> np.ndarray:
    """Carry the last observation forward; leading gaps take the first observation, empty channels 0."""
    x = ground.corrupted
    values = x.zero_filled()
    prev, nxt = _neighbours(x.mask)
    T = x.seq_len
    src = np.where(prev >= 0, prev, nxt)
    src = np.where(src < T, src, 0)
    filled = np.take_along_axis(values, src, axis=1)
    filled = np.where(x.mask.any(axis=1, keepdims=True), filled, 0.0)
    return combine(x, filled)


def impute_linear(ground: GroundSet) -> np.ndarray:
    """Interpolate interior gaps linearly; edges copy the nearest observation, empty channels 0."""
    x = ground.corrupted
    values = x.zero_filled()
    prev, nxt = _neighbours(x.mask)
    T = x.seq_len
    has_prev, has_next = prev >= 0, nxt < T
    v_prev = np.take_along_axis(values, np.clip(prev, 0, T - 1), axis=1)
    v_next = np.take_along_axis(values, np.clip(nxt, 0, T - 1), axis=1)
    t = np.arange(T, dtype=np.float64)[None, :, None]
    span = np.where(has_prev & has_next & (nxt > prev), nxt - prev, 1)
    interior = v_prev + (v_next - v_prev) * (t - prev) / span
    filled = np.where(has_prev & has_next, interior, np.where(has_prev, v_prev, np.where(has_next, v_next, 0.0)))
    return combine(x, filled)


# -- adapted linear ----------------------------------------------------------


@dataclass
class TrainedImputer:
    params: BackboneParams
    train_history: list = field(default_factory=list)
    best_epoch: int = -1
    n_features: int = 0

    @property
    def n_params(self) -> int:
        return self.params.n_params

    @property
    def seq_len(self) -> int:
        return self.params.seq_len


def _mit_mask(rng: np.random.Generator, observed: np.ndarray, rate: float) -> np.ndarray:
    flat = np.flatnonzero(observed.ravel())
    k = int(np.floor(rate * flat.size))
    out = np.zeros(observed.size, dtype=bool)
    out[flat[rng.permutation(flat.size)[:k]]] = True
    return out.reshape(observed.shape)


def model_reconstruction(params: BackboneParams, corrupted: SampleSet) -> np.ndarray:
    return forward(params, corrupted.zero_filled(), corrupted.mask)


def validation_mae(params: BackboneParams, val: GroundSet) -> float:
    imputed = combine(val.corrupted, model_reconstruction(params, val.corrupted))
    return masked_error("mae", imputed, val.truth, val.indicating_mask)


def fit_adapted_linear(train: GroundSet, val: GroundSet, spec: ImputerSpec, seed: int) -> TrainedImputer:
    """Train the decomposition-linear backbone with the joint ORT + MIT loss.

    Each epoch shuffles the training samples and, per mini-batch, hides a
    ``mit_rate`` share of the observed cells. The model reconstructs all
    cells; ORT scores the still-visible cells and MIT the hidden ones.
    Early stopping follows the validation MAE on ``val``'s indicating mask
    (or the training loss when ``val`` has no indicated cells); the
    parameters of the best epoch are returned.
    """
    if spec.kind != "adapted_linear":
        raise ValueError(f"spec kind must be 'adapted_linear', got {spec.kind!r}")
    hp = spec.resolved()
    X = train.corrupted
    if X.n_observed == 0:
        raise ValueError("training set has no observed cell")
    if val.shape[1:] != X.shape[1:]:
        raise ValueError(f"validation shape {val.shape} incompatible with training shape {X.shape}")
    N, T, D = X.shape
    window = int(max(1, min(int(hp["ma_window"]), T)))
    params = BackboneParams.identity(T, D if hp["individual"] else 1, window)
    state = AdamState.for_params(params, lr=float(hp["lr"]))
    model = TrainedImputer(params.copy(), [], -1, D)

    values, observed = X.zero_filled(), X.mask.astype(bool)
    batch_size = max(1, int(hp["batch_size"]))
    use_val = val.n_indicated > 0
    best_score, stale = np.inf, 0
    for epoch in range(int(hp["epochs"])):
        rng = substream(seed, "adapted_linear", "epoch", epoch)
        order = rng.permutation(N)
        tot_ort = tot_mit = tot = 0.0
        n_batches = 0
        for start in range(0, N, batch_size):
            idx = np.sort(order[start : start + batch_size])
            mit = _mit_mask(rng, observed[idx], float(hp["mit_rate"]))
            batch = Batch.from_masks(values[idx], observed[idx], mit)
            (total, ort, mit_loss), grads = gradient(params, batch, hp["w_ort"], hp["w_mit"])
            if not np.isfinite(total):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting {start}")
            state, params = adam_step(state, params, grads)
            tot_ort += ort
            tot_mit += mit_loss
            tot += total
            n_batches += 1
        val_mae = validation_mae(params, val) if use_val else float("nan")
        if use_val and not np.isfinite(val_mae):
            raise TrainingDiverged(f"non-finite validation MAE at epoch {epoch}")
        model.train_history.append((tot_ort / n_batches, tot_mit / n_batches, val_mae))
        score = val_mae if use_val else tot / n_batches
        if score < best_score:
            best_score, stale = score, 0
            model.params, model.best_epoch = params.copy(), epoch
        else:
            stale += 1
            if stale > int(hp["patience"]):
                logger.debug("early stop at epoch %d (best %d)", epoch, model.best_epoch)
                break
    return model


def impute_model(model: TrainedImputer, ground: GroundSet) -> np.ndarray:
    x = ground.corrupted
    if x.seq_len != model.seq_len or (model.n_features and x.n_features != model.n_features):
        raise ValueError(
            f"ground set [{x.seq_len} x {x.n_features}] does not match model [{model.seq_len} x {model.n_features}]"
        )
    return combine(x, model_reconstruction(model.params, x))


# -- parameter files ----------------------------------------------------------

PARAM_FILE_MAGIC = b"POTSBENCH-PARAMS"
PARAM_FILE_VERSION = 1


def save_trained(model: TrainedImputer, path) -> None:
    """Header line, one JSON metadata line, then the parameters as little-endian float64."""
    arrays = model.params.arrays()
    meta = {
        "window": model.params.window,
        "best_epoch": model.best_epoch,
        "n_features": model.n_features,
        "history": [list(map(float, h)) for h in model.train_history],
        "shapes": {k: list(a.shape) for k, a in arrays.items()},
    }
    with Path(path).open("wb") as fh:
        fh.write(PARAM_FILE_MAGIC + b" %d\n" % PARAM_FILE_VERSION)
        fh.write(json.dumps(meta, sort_keys=True).encode() + b"\n")
        for name in PARAM_NAMES:
            a = arrays[name]
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_trained(path) -> TrainedImputer:
    with Path(path).open("rb") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != PARAM_FILE_MAGIC:
            raise ValueError(f"{path}: not a parameter file")
        if int(header[1]) != PARAM_FILE_VERSION:
            raise ValueError(f"{path}: unsupported parameter file version {int(header[1])}")
        meta = json.loads(fh.readline())
        arrays = {}
        for name in PARAM_NAMES:
            shape = meta["shapes"][name]
            n = int(np.prod(shape))
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ValueError(f"{path}: truncated parameter block {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after parameters")
    params = BackboneParams(**arrays, window=int(meta["window"]))
    history = [tuple(h) for h in meta["history"]]
    return TrainedImputer(params, history, int(meta["best_epoch"]), int(meta["n_features"]))


def run_imputer(spec: ImputerSpec, ground: GroundSet, train: GroundSet, model: TrainedImputer | None = None):
    """Dispatch a naive imputer (or a fitted model) on ``ground``; ``train`` supplies Mean/Median stats."""
    if spec.kind in ("mean", "median"):
        return impute_constant_stat(ground, train.corrupted, spec.kind)
    if spec.kind == "locf":
        return impute_locf(ground)
    if spec.kind == "linear":
        return impute_linear(ground)
    if model is None:
        raise ValueError("trainable imputer needs a fitted model")
    return impute_model(model, ground)
