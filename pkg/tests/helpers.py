"""Shared oracle constructions for the unit and acceptance tests."""
import numpy as np

from uavpower.dataset import FEATURE_INDEX, N_FEATURES, Scaler, WindowBatch
from uavpower.neural.model import init_model
from uavpower.neural.train import TrainConfig, train
from uavpower.sensitivity import make_grid, sensitivity_analysis

PAYLOAD_COL = FEATURE_INDEX["payload"]
# payload spans 0..750 g; targets span 0..1000 W, so the normalized half range is 500 W
LINEAR_SCALER = Scaler(np.zeros(N_FEATURES), np.full(N_FEATURES, 750.0), 0.0, 1000.0)
LINEAR_SLOPE = 2.0
LINEAR_BAND = 0.4  # |payload_norm| bound keeps 2 * payload_norm inside the tanh range


def linear_payload_windows(n=512, T=5, seed=0, nuisance=0.2):
    """Normalized windows with ``target = 2 * payload_norm``.

    Payload is constant within each window; every other feature is small
    uniform noise the model has to learn to ignore.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(-nuisance, nuisance, (n, T, N_FEATURES))
    p = rng.uniform(-LINEAR_BAND, LINEAR_BAND, n)
    X[:, :, PAYLOAD_COL] = p[:, None]
    return WindowBatch(X, LINEAR_SLOPE * p, LINEAR_SCALER)


def recovered_payload_slope(seed=0, epochs=40):
    """Train on the linear oracle, run the payload sensitivity grid and fit the slope.

    Returns ``(slope in normalized units, rows)``.
    """
    wb = linear_payload_windows(seed=seed)
    cfg = TrainConfig(epochs=epochs, hidden=8, batch_size=32, dropout_rate=0.0, learning_rate=5e-3, seed=seed)
    model, _ = train(wb, cfg)
    sc = LINEAR_SCALER
    lo = float(sc.inverse_features(np.full(N_FEATURES, -LINEAR_BAND))[PAYLOAD_COL])
    hi = float(sc.inverse_features(np.full(N_FEATURES, LINEAR_BAND))[PAYLOAD_COL])
    rows = sensitivity_analysis(model, sc, wb.features[:128], [make_grid("payload", lo, hi)])
    x = np.array([sc.transform_value("payload", r.step_value) for r in rows])
    half_range = (sc.target_max - sc.target_min) / 2.0
    d = np.array([r.delta_watts for r in rows]) / half_range
    return float(np.polyfit(x, d, 1)[0]), rows


def odd_model(hidden=3, seed=0):
    """A network whose output is an odd function of its input window.

    Only the cell-candidate gate reads the input and every bias is zero, so the
    i/f/o gates sit at 0.5 and each layer maps x -> -x to h -> -h.
    """
    m = init_model(N_FEATURES, hidden, 0.0, seed=seed)
    H = hidden
    for name, p in m.params.items():
        if name.endswith(".b"):
            p[:] = 0.0
        elif not name.startswith("dense"):
            keep = p[:, 2 * H:3 * H].copy()
            p[:] = 0.0
            p[:, 2 * H:3 * H] = keep
    return m


def overfit_windows(n=32, T=10, seed=0):
    """32 windows whose target is a smooth function of the inputs."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, T, N_FEATURES))
    mean = X.mean(axis=1)
    y = 0.6 * np.tanh(mean[:, 0] + 0.5 * mean[:, 1] - 0.3 * X[:, -1, 2])
    return WindowBatch(X, y, LINEAR_SCALER)
