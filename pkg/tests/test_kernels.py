import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glmcausal import kernels
from glmcausal.kernels import lasso_coordinate_descent, lasso_path_cd, soft_threshold

needs_numba = pytest.mark.skipif(not kernels.NUMBA_AVAILABLE, reason="numba not installed")


def standardized(rng, n, p, rho=0.3):
    cov = rho * np.ones((p, p)) + (1 - rho) * np.eye(p)
    X = rng.multivariate_normal(np.zeros(p), cov, size=n)
    X = (X - X.mean(0)) / X.std(0)
    y = X[:, 0] * 1.5 - X[:, 1] + rng.standard_normal(n)
    return X, y - y.mean()


def objective(X, y, b, lam):
    r = y - X @ b
    return r @ r / (2 * len(y)) + lam * np.abs(b).sum()


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([0.8, -0.8, 0.2]), 0.3), [0.5, -0.5, 0.0])


@pytest.mark.parametrize("backend", ["numpy", pytest.param("numba", marks=needs_numba)])
def test_univariate_soft_threshold(backend):
    rng = np.random.default_rng(0)
    n = 500
    x = rng.standard_normal(n)
    x = (x - x.mean()) / x.std()
    e = rng.standard_normal(n)
    e -= e.mean()
    e -= (e @ x) / (x @ x) * x
    y = 0.8 * x + e
    assert x @ y / n == pytest.approx(0.8, abs=1e-12)
    for lam, want in [(0.3, 0.5), (0.8, 0.0), (1.2, 0.0), (0.0, 0.8)]:
        b, _ = lasso_coordinate_descent(x[:, None], y, lam, backend=backend)
        assert abs(b[0] - want) < 1e-7


@needs_numba
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_backends_agree(seed, p):
    rng = np.random.default_rng(seed)
    X, y = standardized(rng, 60, max(p, 2))
    lmax = np.max(np.abs(X.T @ y)) / len(y)
    lams = lmax * np.logspace(0, -3, 30)
    a, sa = lasso_path_cd(X, y, lams, backend="numpy")
    b, sb = lasso_path_cd(X, y, lams, backend="numba")
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(sa, sb)


def test_objective_non_increasing_per_sweep():
    rng = np.random.default_rng(3)
    X, y = standardized(rng, 100, 8, rho=0.7)
    for lam in (0.01, 0.1, 0.4):
        b = np.zeros(8)
        values = [objective(X, y, b, lam)]
        for _ in range(60):
            b, _ = lasso_coordinate_descent(X, y, lam, beta=b, max_sweeps=1, backend="numpy")
            values.append(objective(X, y, b, lam))
        assert np.all(np.diff(values) <= 1e-13)


def test_warm_start_and_zero_lambda_is_ols():
    rng = np.random.default_rng(9)
    X, y = standardized(rng, 200, 5)
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    b, sweeps = lasso_coordinate_descent(X, y, 0.0, tol=1e-12)
    np.testing.assert_allclose(b, ols, atol=1e-9)
    again, more = lasso_coordinate_descent(X, y, 0.0, beta=b, tol=1e-12)
    assert more <= 2


def test_unknown_backend():
    with pytest.raises(ValueError):
        lasso_coordinate_descent(np.eye(2), np.ones(2), 0.1, backend="cuda")


def test_env_flag_selects_numpy(monkeypatch):
    import importlib

    monkeypatch.setenv("GLMCAUSAL_DISABLE_NUMBA", "1")
    fresh = importlib.reload(kernels)
    try:
        assert fresh.USE_NUMBA is False
        assert fresh._pick(None) == "numpy"
    finally:
        monkeypatch.delenv("GLMCAUSAL_DISABLE_NUMBA")
        importlib.reload(kernels)


def test_benchmark_script_runs():
    import subprocess
    import sys
    from pathlib import Path

    script = Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"
    out = subprocess.run(
        [sys.executable, str(script), "--n", "80", "--p", "4", "--repeats", "1"], capture_output=True, text=True, check=True
    ).stdout
    assert "numpy" in out
