"""Compare the compiled and numpy LSTM recurrence kernels.

    python3 benchmarks/bench_kernels.py [--batch 128] [--window 10] [--hidden 128] [--repeat 5]

Times the recurrence kernels alone and a full forward+backward training step
with each backend swapped in.
"""
import argparse
import sys
import timeit

import numpy as np

from uavpower.neural import kernels
from uavpower.neural.model import backward, forward, init_model, mse_loss_grad


def best_of(fn, repeat):
    runs = timeit.repeat(fn, number=1, repeat=repeat)
    return min(runs)


def bench(batch, window, hidden, repeat):
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not available; only the numpy backend can be timed", file=sys.stderr)
    rng = np.random.default_rng(0)
    H = hidden
    xproj = rng.normal(size=(batch, window, 4 * H))
    wh = rng.normal(scale=0.1, size=(H, 4 * H))
    dhs = rng.normal(size=(batch, window, H))
    model = init_model(hidden=H, dropout_rate=0.5, seed=0)
    X = rng.uniform(-1, 1, (batch, window, 21))
    y = rng.uniform(-0.5, 0.5, batch)

    results = {}
    for name, (fwd, bwd) in backends.items():
        hs, cs, gates = fwd(xproj, wh)
        t_fwd = best_of(lambda: fwd(xproj, wh), repeat)
        t_bwd = best_of(lambda: bwd(dhs, gates, cs, wh), repeat)

        saved = kernels.recurrence_forward, kernels.recurrence_backward
        kernels.recurrence_forward, kernels.recurrence_backward = fwd, bwd
        try:
            def step():
                pred, cache = forward(model, X, train=True, rng=np.random.default_rng(1))
                backward(cache, model, mse_loss_grad(pred, y))

            t_step = best_of(step, repeat)
        finally:
            kernels.recurrence_forward, kernels.recurrence_backward = saved
        results[name] = (t_fwd, t_bwd, t_step)

    print(f"batch={batch} window={window} hidden={hidden} (best of {repeat})")
    print(f"{'backend':<8} {'kernel fwd ms':>14} {'kernel bwd ms':>14} {'train step ms':>14}")
    for name, (a, b, c) in results.items():
        print(f"{name:<8} {1e3 * a:>14.2f} {1e3 * b:>14.2f} {1e3 * c:>14.2f}")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        print(f"speedup  {py[0] / cy[0]:>14.2f} {py[1] / cy[1]:>14.2f} {py[2] / cy[2]:>14.2f}")
    return results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--window", type=int, default=10)
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    bench(args.batch, args.window, args.hidden, args.repeat)


if __name__ == "__main__":
    main()
