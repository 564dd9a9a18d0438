"""Stacked bidirectional LSTM regressor: forward pass and backpropagation.

Architecture: BiLSTM(21 -> 2H) -> BiLSTM(2H -> 2H) -> dropout -> last time
step -> dense(2H -> 1) -> tanh. Weights live in a flat ``dict`` keyed as
``"l{layer}.{fwd|bwd}.{wx|wh|b}"`` plus ``"dense.w"`` and ``"dense.b"`` so
optimizers and checkpoints can walk them in :func:`param_order`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import expit

from ..dataset import N_FEATURES
from ..errors import InvalidParameterError, NumericError, ShapeError
from . import kernels

DIRECTIONS = ("fwd", "bwd")
N_LAYERS = 2


class DirectionWeights(NamedTuple):
    wx: np.ndarray  # (input width, 4H)
    wh: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)


def param_order(n_layers: int = N_LAYERS) -> list[str]:
    names = [f"l{l}.{d}.{w}" for l in range(1, n_layers + 1) for d in DIRECTIONS for w in ("wx", "wh", "b")]
    return names + ["dense.w", "dense.b"]


@dataclass
class LstmModel:
    params: dict[str, np.ndarray]
    hidden: int = 128
    n_features: int = N_FEATURES
    dropout_rate: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidParameterError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        H = self.hidden
        expected = param_shapes(self.n_features, H)
        for name, shape in expected.items():
            arr = self.params.get(name)
            if arr is None:
                raise ShapeError(f"missing parameter {name}")
            if arr.shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
        if set(self.params) != set(expected):
            raise ShapeError(f"unexpected parameters: {sorted(set(self.params) - set(expected))}")

    def direction(self, layer: int, direction: str) -> DirectionWeights:
        p = self.params
        key = f"l{layer}.{direction}"
        return DirectionWeights(p[f"{key}.wx"], p[f"{key}.wh"], p[f"{key}.b"])

    def copy(self) -> "LstmModel":
        return LstmModel({k: v.copy() for k, v in self.params.items()}, self.hidden, self.n_features, self.dropout_rate)

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


def param_shapes(n_features: int, hidden: int) -> dict[str, tuple[int, ...]]:
    H = hidden
    shapes = {}
    for layer, width in ((1, n_features), (2, 2 * H)):
        for d in DIRECTIONS:
            shapes[f"l{layer}.{d}.wx"] = (width, 4 * H)
            shapes[f"l{layer}.{d}.wh"] = (H, 4 * H)
            shapes[f"l{layer}.{d}.b"] = (4 * H,)
    shapes["dense.w"] = (2 * H,)
    shapes["dense.b"] = (1,)
    return {k: shapes[k] for k in param_order()}


def init_model(
    n_features: int = N_FEATURES,
    hidden: int = 128,
    dropout_rate: float = 0.0,
    seed: int = 0,
) -> LstmModel:
    """Uniform(+-sqrt(1/fan_in)) weights, zero biases except forget gates at +1."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(n_features, hidden).items():
        if name.endswith(".b"):
            b = np.zeros(shape)
            if name != "dense.b":
                b[hidden:2 * hidden] = 1.0
            params[name] = b
        else:
            limit = np.sqrt(1.0 / shape[0])
            params[name] = rng.uniform(-limit, limit, size=shape)
    return LstmModel(params, hidden, n_features, dropout_rate)


# -- single cell ------------------------------------------------------------


def lstm_cell_forward(x_t, h_prev, c_prev, weights: DirectionWeights):
    """One LSTM step. Returns ``(h_t, c_t, cache)``; gates ordered i, f, g, o."""
    wx, wh, b = weights
    x_t, h_prev, c_prev = (np.asarray(a, dtype=np.float64) for a in (x_t, h_prev, c_prev))
    H = wh.shape[0]
    if x_t.shape[-1] != wx.shape[0] or h_prev.shape[-1] != H or c_prev.shape[-1] != H or wh.shape[1] != 4 * H:
        raise ShapeError("lstm_cell_forward: inconsistent input/state/weight shapes")
    z = x_t @ wx + h_prev @ wh + b
    i = expit(z[..., :H])
    f = expit(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = expit(z[..., 3 * H:])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    cache = {"z": z, "i": i, "f": f, "g": g, "o": o, "c_prev": c_prev, "h_prev": h_prev, "x": x_t, "c": c_t}
    return h_t, c_t, cache


# -- layers -----------------------------------------------------------------


def _direction_forward(X: np.ndarray, w: DirectionWeights):
    xproj = np.ascontiguousarray(X @ w.wx + w.b)
    hs, cs, gates = kernels.recurrence_forward(xproj, np.ascontiguousarray(w.wh))
    return hs, {"x": X, "hs": hs, "cs": cs, "gates": gates}


def _direction_backward(dhs: np.ndarray, cache: dict, w: DirectionWeights):
    X, hs = cache["x"], cache["hs"]
    B, T, H = hs.shape
    dz = kernels.recurrence_backward(
        np.ascontiguousarray(dhs), cache["gates"], cache["cs"], np.ascontiguousarray(w.wh)
    )
    h_prev = np.zeros_like(hs)
    h_prev[:, 1:] = hs[:, :-1]
    dz2 = dz.reshape(B * T, 4 * H)
    grads = DirectionWeights(
        X.reshape(B * T, -1).T @ dz2,
        h_prev.reshape(B * T, H).T @ dz2,
        dz2.sum(axis=0),
    )
    return dz @ w.wx.T, grads


def bilstm_layer_forward(seq: np.ndarray, fwd: DirectionWeights, bwd: DirectionWeights):
    """Bidirectional layer over ``(T, width)`` or ``(B, T, width)``.

    Returns ``(outputs, cache)``; outputs concatenate the forward half then the
    backward half along the last axis.
    """
    seq = np.asarray(seq, dtype=np.float64)
    single = seq.ndim == 2
    X = seq[None] if single else seq
    if X.ndim != 3 or X.shape[1] < 1 or X.shape[2] != fwd.wx.shape[0] or X.shape[2] != bwd.wx.shape[0]:
        raise ShapeError(f"bilstm_layer_forward: bad input shape {seq.shape}")
    X = np.ascontiguousarray(X)
    out_f, cache_f = _direction_forward(X, fwd)
    out_b, cache_b = _direction_forward(np.ascontiguousarray(X[:, ::-1]), bwd)
    out = np.concatenate([out_f, out_b[:, ::-1]], axis=2)
    cache = {"fwd": cache_f, "bwd": cache_b}
    return (out[0] if single else out), cache


def bilstm_layer_backward(dout: np.ndarray, cache: dict, fwd: DirectionWeights, bwd: DirectionWeights):
    H = fwd.wh.shape[0]
    dx_f, g_f = _direction_backward(dout[:, :, :H], cache["fwd"], fwd)
    dx_b, g_b = _direction_backward(np.ascontiguousarray(dout[:, ::-1, H:]), cache["bwd"], bwd)
    return dx_f + dx_b[:, ::-1], g_f, g_b


# -- model ------------------------------------------------------------------


def _check_finite(arr: np.ndarray, layer: int) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite activation in layer {layer}", layer=layer)


def _head_input(seq: np.ndarray) -> np.ndarray:
    # sequence-to-one readout of the final step; _head_input_grad must match
    return seq[:, -1, :]


def _head_input_grad(dh: np.ndarray, T: int) -> np.ndarray:
    dseq = np.zeros((dh.shape[0], T, dh.shape[1]))
    dseq[:, -1, :] = dh
    return dseq


def apply_dropout(x: np.ndarray, rate: float, rng: np.random.Generator):
    """Inverted dropout: returns ``(x * mask, mask)`` with survivors scaled by 1/(1-rate)."""
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, mask


def forward(model: LstmModel, X: np.ndarray, train: bool = False, rng: Optional[np.random.Generator] = None):
    """Batched forward pass over normalized windows ``(B, T, F)``.

    Returns ``(predictions (B,), cache)``. In train mode inverted dropout is
    applied to the second layer's output sequence using ``rng``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != model.n_features:
        raise ShapeError(f"expected windows (B, T, {model.n_features}), got {X.shape}")
    out1, c1 = bilstm_layer_forward(X, model.direction(1, "fwd"), model.direction(1, "bwd"))
    _check_finite(out1, 1)
    out2, c2 = bilstm_layer_forward(out1, model.direction(2, "fwd"), model.direction(2, "bwd"))
    _check_finite(out2, 2)
    mask = None
    dropped = out2
    if train and model.dropout_rate > 0.0:
        if rng is None:
            raise InvalidParameterError("train-mode forward with dropout needs an rng")
        dropped, mask = apply_dropout(out2, model.dropout_rate, rng)
    h_last = _head_input(dropped)
    y = np.tanh(h_last @ model.params["dense.w"] + model.params["dense.b"][0])
    _check_finite(y, 3)
    cache = {"c1": c1, "c2": c2, "mask": mask, "h_last": h_last, "y": y, "T": X.shape[1], "train": train}
    return y, cache


def model_forward(window: np.ndarray, model: LstmModel, mode: str = "eval", rng: Optional[np.random.Generator] = None):
    """Single-window forward; ``mode`` is ``"train"`` or ``"eval"``."""
    if mode not in ("train", "eval"):
        raise InvalidParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    y, cache = forward(model, np.asarray(window)[None], train=(mode == "train"), rng=rng)
    return float(y[0]), cache


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.size == 0 or pred.shape != target.shape:
        raise InvalidParameterError("mse_loss needs equal-length non-empty batches")
    r = pred - target
    return float(np.mean(r * r))


def mse_loss_grad(pred, target) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    return 2.0 * (pred - np.asarray(target, dtype=np.float64)) / pred.size


def backward(cache: dict, model: LstmModel, dy: np.ndarray) -> dict[str, np.ndarray]:
    """Full BPTT given ``dL/dy`` for each window in the batch."""
    if not cache or "c1" not in cache:
        raise InvalidParameterError("backward needs the cache of a forward pass")
    dy = np.asarray(dy, dtype=np.float64).ravel()
    y, h_last = cache["y"], cache["h_last"]
    if dy.shape != y.shape:
        raise ShapeError(f"loss gradient shape {dy.shape} does not match batch {y.shape}")
    grads: dict[str, np.ndarray] = {}
    dpre = dy * (1.0 - y * y)
    grads["dense.w"] = h_last.T @ dpre
    grads["dense.b"] = np.array([dpre.sum()])
    T = cache["T"]
    dout2 = _head_input_grad(np.outer(dpre, model.params["dense.w"]), T)
    if cache["mask"] is not None:
        dout2 *= cache["mask"]
    dout1, gf, gb = bilstm_layer_backward(dout2, cache["c2"], model.direction(2, "fwd"), model.direction(2, "bwd"))
    _store(grads, 2, gf, gb)
    _, gf, gb = bilstm_layer_backward(dout1, cache["c1"], model.direction(1, "fwd"), model.direction(1, "bwd"))
    _store(grads, 1, gf, gb)
    return {k: grads[k] for k in param_order()}


def _store(grads: dict, layer: int, gf: DirectionWeights, gb: DirectionWeights) -> None:
    for d, g in (("fwd", gf), ("bwd", gb)):
        grads[f"l{layer}.{d}.wx"] = g.wx
        grads[f"l{layer}.{d}.wh"] = g.wh
        grads[f"l{layer}.{d}.b"] = g.b


def predict(model: LstmModel, X: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Eval-mode predictions (normalized) for a stack of windows."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        return np.empty(0)
    out = [forward(model, X[s:s + batch_size])[0] for s in range(0, X.shape[0], batch_size)]
    return np.concatenate(out)
