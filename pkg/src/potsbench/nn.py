"""Numeric kernel of the trainable imputer.

The backbone is a decomposition-linear model applied along the time axis:
the zero-filled input is split into a moving-average trend and a seasonal
residual, each mapped by a ``T x T`` matrix, and the observation mask enters
through a third ``T x T`` projection plus a per-step bias::

    out[b, :, d] = W_trend @ trend[b, :, d] + W_season @ season[b, :, d]
                   + W_mask @ m[b, :, d] + bias

With ``individual=True`` every feature gets its own set of weights.
Gradients are derived by hand; :func:`finite_difference_check` is the
independent oracle used to test them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PARAM_NAMES = ("trend", "season", "mask_proj", "bias")


@dataclass
class BackboneParams:
    """Weights ``[F, T, T]`` and bias ``[F, T]`` with ``F = 1`` (shared) or ``D`` (per feature)."""

    trend: np.ndarray
    season: np.ndarray
    mask_proj: np.ndarray
    bias: np.ndarray
    window: int

    def __post_init__(self):
        F, T, T2 = self.trend.shape
        if T != T2 or self.season.shape != (F, T, T) or self.mask_proj.shape != (F, T, T):
            raise ValueError("weight matrices must all be [F, T, T]")
        if self.bias.shape != (F, T):
            raise ValueError(f"bias must be [{F}, {T}], got {self.bias.shape}")
        if self.window < 1:
            raise ValueError("moving-average window must be >= 1")

    @property
    def seq_len(self) -> int:
        return self.trend.shape[1]

    @property
    def n_groups(self) -> int:
        return self.trend.shape[0]

    @property
    def individual(self) -> bool:
        return self.n_groups > 1

    @property
    def n_params(self) -> int:
        return sum(getattr(self, name).size for name in PARAM_NAMES)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def replace(self, arrays: dict[str, np.ndarray]) -> "BackboneParams":
        return BackboneParams(**arrays, window=self.window)

    def copy(self) -> "BackboneParams":
        return self.replace({k: v.copy() for k, v in self.arrays().items()})

    @classmethod
    def zeros(cls, seq_len: int, n_groups: int = 1, window: int = 1) -> "BackboneParams":
        T, F = seq_len, n_groups
        return cls(np.zeros((F, T, T)), np.zeros((F, T, T)), np.zeros((F, T, T)), np.zeros((F, T)), window)

    @classmethod
    def identity(cls, seq_len: int, n_groups: int = 1, window: int = 1) -> "BackboneParams":
        """Trend and seasonal maps start as the identity, so the untrained model echoes its input."""
        p = cls.zeros(seq_len, n_groups, window)
        p.trend[:] = np.eye(seq_len)
        p.season[:] = np.eye(seq_len)
        return p


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average over axis 1 with edge-replicate padding (output length unchanged)."""
    if window == 1:
        return x.copy()
    front = (window - 1) // 2
    back = window - 1 - front
    padded = np.concatenate(
        [np.repeat(x[:, :1], front, axis=1), x, np.repeat(x[:, -1:], back, axis=1)], axis=1
    )
    csum = np.cumsum(padded, axis=1)
    csum = np.concatenate([np.zeros_like(csum[:, :1]), csum], axis=1)
    return (csum[:, window:] - csum[:, :-window]) / window


def decompose(x: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    trend = moving_average(x, window)
    return trend, x - trend


def _apply(W: np.ndarray, z: np.ndarray) -> np.ndarray:
    if W.shape[0] == 1:
        return np.einsum("ts,bsd->btd", W[0], z)
    return np.einsum("dts,bsd->btd", W, z)


def _outer(G: np.ndarray, z: np.ndarray, groups: int) -> np.ndarray:
    if groups == 1:
        return np.einsum("btd,bsd->ts", G, z)[None]
    return np.einsum("btd,bsd->dts", G, z)


def _check_inputs(params: BackboneParams, x_in: np.ndarray, m_in: np.ndarray) -> None:
    if x_in.ndim != 3 or x_in.shape != m_in.shape:
        raise ValueError(f"x_in {x_in.shape} and m_in {m_in.shape} must be equal 3-D shapes")
    if x_in.shape[1] != params.seq_len:
        raise ValueError(f"sequence length {x_in.shape[1]} != model length {params.seq_len}")
    if params.individual and x_in.shape[2] != params.n_groups:
        raise ValueError(f"feature count {x_in.shape[2]} != per-feature weight groups {params.n_groups}")


def forward(params: BackboneParams, x_in, m_in) -> np.ndarray:
    """Reconstruct every cell of ``x_in`` (missing cells must already be zero)."""
    x_in = np.asarray(x_in, dtype=np.float64)
    m_in = np.asarray(m_in, dtype=np.float64)
    _check_inputs(params, x_in, m_in)
    trend, season = decompose(x_in, params.window)
    bias = params.bias[0][None, :, None] if params.n_groups == 1 else params.bias.T[None]
    return (
        _apply(params.trend, trend)
        + _apply(params.season, season)
        + _apply(params.mask_proj, m_in)
        + bias
    )


def _masked_mae(diff: np.ndarray, m: np.ndarray) -> float:
    n = m.sum()
    if n == 0:
        return 0.0
    return float(np.abs(diff[m.astype(bool)]).sum() / n)


def joint_loss(x_hat, x_truth, m_ort, m_mit, w_ort: float = 1.0, w_mit: float = 1.0):
    """``(total, ort, mit)`` where ort/mit are masked MAEs over the two disjoint masks."""
    m_ort = np.asarray(m_ort)
    m_mit = np.asarray(m_mit)
    if (m_ort.astype(bool) & m_mit.astype(bool)).any():
        raise ValueError("ORT and MIT masks overlap")
    diff = np.where(m_ort.astype(bool) | m_mit.astype(bool), np.asarray(x_hat) - np.asarray(x_truth), 0.0)
    ort = _masked_mae(diff, m_ort)
    mit = _masked_mae(diff, m_mit)
    return w_ort * ort + w_mit * mit, ort, mit


@dataclass
class Batch:
    """One training batch.

    ``x_in``/``m_in`` feed the model (``x_in`` zero where ``m_in`` is 0);
    ``truth`` holds the reference values under ``m_ort`` and ``m_mit``.
    """

    x_in: np.ndarray
    m_in: np.ndarray
    truth: np.ndarray
    m_ort: np.ndarray
    m_mit: np.ndarray

    @classmethod
    def from_masks(cls, values: np.ndarray, observed: np.ndarray, mit: np.ndarray) -> "Batch":
        """Hide the ``mit`` cells of the observed ``values`` and train on both tasks."""
        observed = observed.astype(bool)
        mit = mit.astype(bool) & observed
        m_in = observed & ~mit
        truth = np.where(observed, values, 0.0)
        x_in = np.where(m_in, values, 0.0)
        f = np.float64
        return cls(x_in, m_in.astype(f), truth, m_in.astype(f), mit.astype(f))


def loss(params: BackboneParams, batch: Batch, w_ort: float = 1.0, w_mit: float = 1.0):
    x_hat = forward(params, batch.x_in, batch.m_in)
    return joint_loss(x_hat, batch.truth, batch.m_ort, batch.m_mit, w_ort, w_mit)


def gradient(params: BackboneParams, batch: Batch, w_ort: float = 1.0, w_mit: float = 1.0):
    """Loss triple and exact (sub)gradients of the joint loss, with ``sign(0) = 0``.

    Returns ``((total, ort, mit), grads)`` where ``grads`` maps parameter
    names to arrays shaped like the parameters.
    """
    x_in = np.asarray(batch.x_in, dtype=np.float64)
    m_in = np.asarray(batch.m_in, dtype=np.float64)
    _check_inputs(params, x_in, m_in)
    trend, season = decompose(x_in, params.window)
    x_hat = forward(params, x_in, m_in)
    losses = joint_loss(x_hat, batch.truth, batch.m_ort, batch.m_mit, w_ort, w_mit)

    sign = np.sign(x_hat - batch.truth)
    G = np.zeros_like(x_hat)
    n_ort, n_mit = batch.m_ort.sum(), batch.m_mit.sum()
    if n_ort > 0:
        G += (w_ort / n_ort) * sign * batch.m_ort
    if n_mit > 0:
        G += (w_mit / n_mit) * sign * batch.m_mit

    F = params.n_groups
    grads = {
        "trend": _outer(G, trend, F),
        "season": _outer(G, season, F),
        "mask_proj": _outer(G, m_in, F),
        "bias": G.sum(axis=(0, 2))[None] if F == 1 else G.sum(axis=0).T.copy(),
    }
    return losses, grads


def finite_difference_check(params: BackboneParams, batch: Batch, w_ort: float = 1.0, w_mit: float = 1.0,
                            h: float = 1e-5, abs_floor: float = 1e-8) -> float:
    """Largest per-coordinate discrepancy between analytic and central-difference gradients.

    Relative error where ``|analytic| >= abs_floor``, absolute error otherwise.
    """
    _, grads = gradient(params, batch, w_ort, w_mit)
    worst = 0.0
    for name, arr in params.arrays().items():
        flat = arr.reshape(-1)
        g = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss(params, batch, w_ort, w_mit)[0]
            flat[i] = orig - h
            down = loss(params, batch, w_ort, w_mit)[0]
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            if abs(g[i]) < abs_floor:
                err = abs(numeric - g[i])
            else:
                err = abs(numeric - g[i]) / abs(g[i])
            worst = max(worst, err)
    return worst


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: BackboneParams, lr: float = 1e-3, **kwargs) -> "AdamState":
        arrays = params.arrays()
        return cls(lr=lr, m={k: np.zeros_like(a) for k, a in arrays.items()},
                   v={k: np.zeros_like(a) for k, a in arrays.items()}, **kwargs)

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.step,
                         {k: a.copy() for k, a in self.m.items()}, {k: a.copy() for k, a in self.v.items()})


def adam_step(state: AdamState, params: BackboneParams, grads: dict):
    """One bias-corrected Adam update. Returns new ``(state, params)``; inputs are left untouched."""
    for name, g in grads.items():
        if g.shape != getattr(params, name).shape:
            raise ValueError(f"gradient {name!r} shape {g.shape} != parameter shape")
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient for {name!r} at Adam step {state.step + 1}")
    step = state.step + 1
    new_m, new_v, new_p = {}, {}, {}
    c1 = 1 - state.beta1 ** step
    c2 = 1 - state.beta2 ** step
    for name, p in params.arrays().items():
        g = grads[name]
        m = state.beta1 * state.m[name] + (1 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        new_p[name] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[name], new_v[name] = m, v
    new_state = AdamState(state.lr, state.beta1, state.beta2, state.eps, step, new_m, new_v)
    return new_state, params.replace(new_p)
