import numpy as np
import pytest

from uavpower.neural import kernels

BACKENDS = kernels.available_backends()


def _case(B=3, T=5, H=4, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(B, T, 4 * H)), rng.normal(scale=0.5, size=(H, 4 * H)), rng.normal(size=(B, T, H))


def test_python_backend_always_available():
    assert "python" in BACKENDS


def test_selected_backend_is_listed():
    assert kernels.BACKEND in BACKENDS


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
@pytest.mark.parametrize("shape", [(1, 1, 1), (2, 3, 4), (5, 10, 16), (3, 7, 33)])
def test_backend_parity(shape):
    B, T, H = shape
    xproj, wh, dhs = _case(B, T, H, seed=B * T + H)
    (pf, pb), (cf, cb) = BACKENDS["python"], BACKENDS["cython"]
    hs1, cs1, g1 = pf(xproj, wh)
    hs2, cs2, g2 = cf(xproj, wh)
    np.testing.assert_allclose(hs2, hs1, rtol=0, atol=1e-13)
    np.testing.assert_allclose(cs2, cs1, rtol=0, atol=1e-13)
    np.testing.assert_allclose(g2, g1, rtol=0, atol=1e-13)
    np.testing.assert_allclose(cb(dhs, g2, cs2, wh), pb(dhs, g1, cs1, wh), rtol=0, atol=1e-12)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_zero_input_zero_state(name):
    fwd, _ = BACKENDS[name]
    hs, cs, _ = fwd(np.zeros((2, 4, 12)), np.zeros((3, 12)))
    assert not hs.any() and not cs.any()


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_backward_matches_finite_difference(name):
    fwd, bwd = BACKENDS[name]
    xproj, wh, dhs = _case(2, 4, 3, seed=9)
    hs, cs, gates = fwd(xproj, wh)
    dz = bwd(dhs, gates, cs, wh)
    eps = 1e-6
    num = np.zeros_like(xproj)
    for idx in np.ndindex(xproj.shape):
        xp = xproj.copy()
        xp[idx] += eps
        up = np.sum(fwd(xp, wh)[0] * dhs)
        xp[idx] -= 2 * eps
        down = np.sum(fwd(xp, wh)[0] * dhs)
        num[idx] = (up - down) / (2 * eps)
    np.testing.assert_allclose(dz, num, rtol=1e-6, atol=1e-8)


def test_benchmark_script_runs(capsys):
    import importlib.util
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    loader = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(loader)
    loader.loader.exec_module(mod)
    results = mod.bench(batch=2, window=3, hidden=4, repeat=1)
    assert set(results) == set(BACKENDS)
    assert "train step ms" in capsys.readouterr().out
