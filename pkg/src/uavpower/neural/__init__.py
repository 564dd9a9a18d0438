"""Stacked bidirectional LSTM regressor trained with BPTT and Adam."""
from .checkpoint import load_checkpoint, save_checkpoint
from .kernels import BACKEND
from .model import (
    DirectionWeights,
    LstmModel,
    backward,
    bilstm_layer_forward,
    forward,
    init_model,
    lstm_cell_forward,
    model_forward,
    mse_loss,
    mse_loss_grad,
    param_order,
    predict,
)
from .optim import AdamConfig, AdamState, adam_step
from .train import TrainConfig, TrainReport, predict_series, train

__all__ = [
    "BACKEND",
    "AdamConfig",
    "AdamState",
    "DirectionWeights",
    "LstmModel",
    "TrainConfig",
    "TrainReport",
    "adam_step",
    "backward",
    "bilstm_layer_forward",
    "forward",
    "init_model",
    "load_checkpoint",
    "lstm_cell_forward",
    "model_forward",
    "mse_loss",
    "mse_loss_grad",
    "param_order",
    "predict",
    "predict_series",
    "save_checkpoint",
    "train",
]
