"""Numeric inner loops, compiled with numba when it is available.

Set ``GLMCAUSAL_DISABLE_NUMBA=1`` to force the pure-numpy implementations.
Both backends run the same algorithm in the same order, so they agree to
rounding error; ``backend=`` on each entry point overrides the default.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    numba = None

__all__ = ["NUMBA_AVAILABLE", "USE_NUMBA", "lasso_coordinate_descent", "lasso_path_cd", "soft_threshold"]

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("GLMCAUSAL_DISABLE_NUMBA", "").lower() not in ("1", "true", "yes")


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


# --------------------------------------------------------------------------
# numpy backend


def _cd_numpy(X, y, lam, beta, tol, max_sweeps):
    n, p = X.shape
    col_sq = np.einsum("ij,ij->j", X, X) / n
    r = y - X @ beta
    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in range(p):
            old = beta[j]
            rho = X[:, j] @ r / n + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            if new != old:
                r -= (new - old) * X[:, j]
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tol:
            return sweep
    return max_sweeps


def _path_numpy(X, y, lambdas, tol, max_sweeps):
    p = X.shape[1]
    coefs = np.zeros((len(lambdas), p))
    sweeps = np.zeros(len(lambdas), dtype=np.int64)
    beta = np.zeros(p)
    for k in range(len(lambdas)):
        sweeps[k] = _cd_numpy(X, y, lambdas[k], beta, tol, max_sweeps)
        coefs[k] = beta
    return coefs, sweeps


# --------------------------------------------------------------------------
# numba backend


def _cd_loops(X, y, lam, beta, tol, max_sweeps):
    n, p = X.shape
    col_sq = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        col_sq[j] = s / n
    r = y.copy()
    for j in range(p):
        if beta[j] != 0.0:
            for i in range(n):
                r[i] -= X[i, j] * beta[j]
    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in range(p):
            old = beta[j]
            g = 0.0
            for i in range(n):
                g += X[i, j] * r[i]
            rho = g / n + col_sq[j] * old
            a = abs(rho) - lam
            new = 0.0
            if a > 0.0:
                new = (a if rho > 0.0 else -a) / col_sq[j]
            if new != old:
                d = new - old
                for i in range(n):
                    r[i] -= d * X[i, j]
                beta[j] = new
                if abs(d) > max_change:
                    max_change = abs(d)
        if max_change < tol:
            return sweep
    return max_sweeps


def _path_loops(X, y, lambdas, tol, max_sweeps):
    p = X.shape[1]
    coefs = np.zeros((lambdas.shape[0], p))
    sweeps = np.zeros(lambdas.shape[0], dtype=np.int64)
    beta = np.zeros(p)
    for k in range(lambdas.shape[0]):
        sweeps[k] = _cd_jit(X, y, lambdas[k], beta, tol, max_sweeps)
        for j in range(p):
            coefs[k, j] = beta[j]
    return coefs, sweeps


if NUMBA_AVAILABLE:
    _cd_jit = numba.njit(cache=False, nogil=True)(_cd_loops)
    _path_jit = numba.njit(cache=False, nogil=True)(_path_loops)
else:  # pragma: no cover
    _cd_jit = _cd_loops
    _path_jit = _path_loops


def _pick(backend):
    if backend is None:
        backend = "numba" if USE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def lasso_coordinate_descent(X, y, lam, beta=None, tol=1e-7, max_sweeps=100_000, backend=None):
    """Minimise (1/2n)||y - X b||^2 + lam * ||b||_1 by cyclic coordinate descent.

    ``beta`` is the warm start. Returns ``(beta, sweeps)``; stops once the
    largest coefficient change in a full sweep is below ``tol``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    beta = np.zeros(X.shape[1]) if beta is None else np.array(beta, dtype=np.float64)
    if _pick(backend) == "numba":
        sweeps = _cd_jit(X, y, float(lam), beta, float(tol), int(max_sweeps))
    else:
        sweeps = _cd_numpy(X, y, float(lam), beta, tol, max_sweeps)
    return beta, int(sweeps)


def lasso_path_cd(X, y, lambdas, tol=1e-7, max_sweeps=100_000, backend=None):
    """Warm-started coordinate descent along ``lambdas`` (in given order).

    Returns ``(coefs, sweeps)`` with one coefficient row per lambda.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    lambdas = np.ascontiguousarray(lambdas, dtype=np.float64)
    if _pick(backend) == "numba":
        return _path_jit(X, y, lambdas, float(tol), int(max_sweeps))
    return _path_numpy(X, y, lambdas, tol, max_sweeps)
