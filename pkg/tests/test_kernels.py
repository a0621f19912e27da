import os
import subprocess
import sys

import numpy as np
import pytest

from actionrec import kernels

needs_compiled = pytest.mark.skipif("compiled" not in kernels.available_backends(),
                                    reason="compiled kernels not built")


def test_backend_flags():
    assert kernels.BACKEND in kernels.available_backends()
    assert kernels.get_backend("python").__name__.endswith("_fallback")
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_env_forces_fallback():
    env = dict(os.environ, ACTIONREC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import actionrec; print(actionrec.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
@pytest.mark.parametrize("seed", range(10))
def test_merge_equivalent(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 300))
    m = int(rng.integers(1, 3 * n))
    a = rng.integers(0, n, m)
    b = rng.integers(0, n, m)
    w = np.sort(rng.integers(0, 50, m).astype(float))
    k, min_size = float(rng.choice([1.0, 20.0, 500.0])), int(rng.integers(1, 10))
    np.testing.assert_array_equal(
        kernels.merge_components(a, b, w, n, k, min_size, backend="compiled"),
        kernels.merge_components(a, b, w, n, k, min_size, backend="python"))


@needs_compiled
@pytest.mark.parametrize("seed", range(10))
def test_greedy_equivalent(seed):
    rng = np.random.default_rng(seed)
    T, K = int(rng.integers(1, 30)), int(rng.integers(2, 8))
    unary = rng.integers(-3, 4, (T, K)).astype(float)  # integer values provoke ties
    pair = rng.integers(-2, 3, (K, K)).astype(float)
    pair = pair + pair.T
    h0 = rng.integers(0, K, T)
    h1, h2 = h0.copy(), h0.copy()
    s1 = kernels.greedy_sweeps(unary, pair, h1, 50, backend="compiled")
    s2 = kernels.greedy_sweeps(unary, pair, h2, 50, backend="python")
    assert s1 == s2
    np.testing.assert_array_equal(h1, h2)


@needs_compiled
@pytest.mark.parametrize("seed", range(5))
def test_cs_sgd_equivalent(seed):
    rng = np.random.default_rng(seed)
    n, d, K = 30, 4, 3
    X = rng.normal(size=(n, d))
    y = rng.integers(0, K, n)
    order = np.concatenate([rng.permutation(n) for _ in range(20)])
    out = []
    for backend in ("compiled", "python"):
        W, W_avg = np.zeros((K, d)), np.zeros((K, d))
        t = kernels.cs_sgd_epochs(X, y, W, W_avg, order, 0.05, 0, len(order) // 2 + 1, backend=backend)
        out.append((t, W, W_avg))
    assert out[0][0] == out[1][0] == len(order)
    np.testing.assert_allclose(out[0][1], out[1][1], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(out[0][2], out[1][2], rtol=1e-12, atol=1e-12)


def test_benchmark_script_runs():
    root = __import__("pathlib").Path(__file__).resolve().parents[1]
    out = subprocess.run([sys.executable, str(root / "benchmarks" / "bench_kernels.py"), "--repeat", "1"],
                         capture_output=True, text=True, check=True)
    assert "segment" in out.stdout and "greedy" in out.stdout
