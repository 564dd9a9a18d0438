"""Central finite-difference check of the BPTT gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LstmModel, backward, forward, mse_loss, mse_loss_grad


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    per_param: dict[str, float]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is (near) zero from turning
    rounding noise into a huge ratio.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_gradients(
    model: LstmModel,
    X: np.ndarray,
    y: np.ndarray,
    eps: float = 1e-5,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckResult:
    """Compare ``backward`` against finite differences of the MSE loss.

    When the model has dropout, the same mask is replayed for every
    perturbed evaluation by reseeding the generator.
    """

    def loss() -> float:
        pred, _ = forward(model, X, train=True, rng=np.random.default_rng(seed))
        return mse_loss(pred, y)

    pred, cache = forward(model, X, train=True, rng=np.random.default_rng(seed))
    grads = backward(cache, model, mse_loss_grad(pred, y))
    per_param: dict[str, float] = {}
    worst = (-1.0, "", ())
    for name, p in model.params.items():
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            up = loss()
            p[idx] = orig - eps
            down = loss()
            p[idx] = orig
            numeric[idx] = (up - down) / (2.0 * eps)
        rel = relative_error(grads[name], numeric, floor)
        k = np.unravel_index(int(np.argmax(rel)), rel.shape)
        per_param[name] = float(rel[k])
        if rel[k] > worst[0]:
            worst = (float(rel[k]), name, tuple(int(i) for i in k))
    return GradCheckResult(worst[0], worst[1], worst[2], per_param)
