"""Pure numpy LSTM recurrence kernels.

Both functions process one direction of one layer for a whole batch, in the
order the time axis is given (callers reverse the axis for the backward
direction). Gate blocks along the last axis are ordered input, forget, cell,
output. Initial hidden and cell states are zero.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit


def recurrence_forward(xproj: np.ndarray, w_h: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run the recurrence over pre-projected inputs.

    ``xproj`` is ``(B, T, 4H)`` = inputs @ W_x + b. Returns hidden states and
    cell states ``(B, T, H)`` and activated gates ``(B, T, 4H)``.
    """
    B, T, H4 = xproj.shape
    H = H4 // 4
    hs = np.zeros((B, T, H))
    cs = np.zeros((B, T, H))
    gates = np.empty((B, T, H4))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = xproj[:, t] + h @ w_h
        a = gates[:, t]
        a[:, :2 * H] = expit(z[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        a[:, 3 * H:] = expit(z[:, 3 * H:])
        c = a[:, H:2 * H] * c + a[:, :H] * a[:, 2 * H:3 * H]
        h = a[:, 3 * H:] * np.tanh(c)
        cs[:, t] = c
        hs[:, t] = h
    return hs, cs, gates


def recurrence_backward(dhs: np.ndarray, gates: np.ndarray, cs: np.ndarray, w_h: np.ndarray) -> np.ndarray:
    """Backpropagate upstream hidden-state gradients through the recurrence.

    Returns the gradient with respect to the gate pre-activations, ``(B, T, 4H)``.
    """
    B, T, H = dhs.shape
    dz = np.empty((B, T, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        a = gates[:, t]
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        c_prev = cs[:, t - 1] if t > 0 else np.zeros((B, H))
        tc = np.tanh(cs[:, t])
        dh = dhs[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        d = dz[:, t]
        d[:, :H] = dc * g * i * (1.0 - i)
        d[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        d[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        d[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = d @ w_h.T
    return dz
