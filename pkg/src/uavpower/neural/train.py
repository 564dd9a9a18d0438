"""Mini-batch training loop and flight-level prediction."""
from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..dataset import DEFAULT_WINDOW, FlightRecord, Scaler, WindowBatch, window_starts
from ..errors import DivergenceError, InvalidParameterError
from .model import LstmModel, backward, forward, init_model, mse_loss, mse_loss_grad, param_order, predict
from .optim import AdamConfig, AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 50
    dropout_rate: float = 0.5
    seed: int = 0
    hidden: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: Optional[float] = None
    eval_train: bool = False

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise InvalidParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InvalidParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise InvalidParameterError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidParameterError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.hidden < 1:
            raise InvalidParameterError(f"hidden must be >= 1, got {self.hidden}")

    def adam(self) -> AdamConfig:
        return AdamConfig(self.learning_rate, self.beta1, self.beta2, self.eps, self.clip_norm)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    """Per-epoch losses are normalized-target MSE.

    ``train_loss`` averages the mini-batch losses seen during the epoch (train
    mode, so with dropout); ``train_eval_loss`` is filled only when
    ``TrainConfig.eval_train`` is set and holds the eval-mode MSE over the
    whole training split after the epoch.
    """

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    train_eval_loss: list[float] = field(default_factory=list)
    checkpoint_id: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def weights_digest(model: LstmModel) -> str:
    h = hashlib.sha256()
    for k in param_order():
        h.update(np.ascontiguousarray(model.params[k], dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def train(
    windows: WindowBatch,
    config: TrainConfig,
    split: Optional[tuple[Sequence[int], Sequence[int]]] = None,
    model: Optional[LstmModel] = None,
) -> tuple[LstmModel, TrainReport]:
    """Train on ``split[0]`` and validate on ``split[1]`` each epoch.

    ``split`` defaults to all windows for both. Returns the final-epoch model.
    """
    n = len(windows)
    if split is None:
        split = (np.arange(n), np.arange(n))
    train_idx = np.asarray(split[0], dtype=np.intp)
    val_idx = np.asarray(split[1], dtype=np.intp)
    if train_idx.size == 0 or val_idx.size == 0:
        raise InvalidParameterError("train and validation splits must be non-empty")

    init_seq, loop_seq = np.random.SeedSequence(config.seed).spawn(2)
    if model is None:
        model = init_model(
            windows.features.shape[2],
            config.hidden,
            config.dropout_rate,
            seed=int(init_seq.generate_state(1)[0]),
        )
    else:
        model.dropout_rate = config.dropout_rate
    rng = np.random.default_rng(loop_seq)
    adam_cfg = config.adam()
    state = AdamState.zeros_like(model.params)
    X, y = windows.features, windows.targets
    report = TrainReport()

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = train_idx[rng.permutation(train_idx.size)]
        total, count = 0.0, 0
        for b, s in enumerate(range(0, order.size, config.batch_size)):
            idx = order[s:s + config.batch_size]
            pred, cache = forward(model, X[idx], train=True, rng=rng)
            loss = mse_loss(pred, y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch, b, loss)
            grads = backward(cache, model, mse_loss_grad(pred, y[idx]))
            adam_step(model.params, grads, state, adam_cfg)
            total += loss * idx.size
            count += idx.size
        report.train_loss.append(total / count)
        val = mse_loss(predict(model, X[val_idx]), y[val_idx])
        if not np.isfinite(val):
            raise DivergenceError(epoch, -1, val)
        report.val_loss.append(val)
        if config.eval_train:
            report.train_eval_loss.append(mse_loss(predict(model, X[train_idx]), y[train_idx]))
        report.epoch_seconds.append(time.perf_counter() - t0)
        log.info("epoch %d/%d train=%.6g val=%.6g", epoch + 1, config.epochs, report.train_loss[-1], val)

    report.checkpoint_id = weights_digest(model)
    return model, report


def predict_series(
    flight: FlightRecord,
    model: LstmModel,
    scaler: Scaler,
    T: int = DEFAULT_WINDOW,
) -> np.ndarray:
    """Per-sample power predictions in watts; the first ``T - 1`` entries are NaN."""
    n = len(flight)
    if n < T:
        raise InvalidParameterError(f"flight {flight.flight_id} has {n} samples, needs >= {T}")
    feats = scaler.transform_features(flight.features())
    X = np.stack([feats[s:s + T] for s in window_starts(n, T, 1)])
    out = np.full(n, np.nan)
    out[T - 1:] = scaler.inverse_target(predict(model, X))
    return out
