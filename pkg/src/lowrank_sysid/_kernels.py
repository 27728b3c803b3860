"""Batched linear-algebra kernels with a numba path and a pure-numpy path.

The backend is picked once at import time:

* ``LOWRANK_SYSID_NUMBA=0`` (or numba not importable) selects numpy;
* anything else selects numba.

``set_backend`` switches at runtime, which the tests and the benchmark use to
compare the two paths. Both paths compute the same quantities from the same
SVDs; results agree to rounding error, not bit for bit.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


EPS = np.finfo(np.float64).eps


def _env_backend() -> str:
    flag = os.environ.get("LOWRANK_SYSID_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off") or not NUMBA_AVAILABLE:
        return "numpy"
    return "numba"


BACKEND = _env_backend()


def set_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    previous, BACKEND = BACKEND, name
    return previous


def default_rel_tol(T: int, d: int) -> float:
    return EPS * max(T, d)


# ---------------------------------------------------------------------------
# batched pseudoinverse
# ---------------------------------------------------------------------------

@njit(cache=True)
def _pinv_batch_nb(X, rel_tol):
    n, T, d = X.shape
    k = min(T, d)
    out = np.zeros((n, d, T))
    opnorm = np.empty(n)
    smin = np.empty(n)
    for i in range(n):
        U, s, Vt = np.linalg.svd(np.ascontiguousarray(X[i]), full_matrices=False)
        smin[i] = s[k - 1]
        cutoff = rel_tol * s[0]
        largest_inv = 0.0
        for j in range(k):
            if s[j] > cutoff and s[j] > 0.0:
                inv = 1.0 / s[j]
                if inv > largest_inv:
                    largest_inv = inv
                for a in range(d):
                    va = Vt[j, a] * inv
                    for b in range(T):
                        out[i, a, b] += va * U[b, j]
        opnorm[i] = largest_inv
    return out, opnorm, smin


def _pinv_batch_np(X, rel_tol):
    k = min(X.shape[1], X.shape[2])
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = (s > rel_tol * s[:, :1]) & (s > 0.0)
    inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    pinv = np.matmul(np.swapaxes(Vt, 1, 2) * inv[:, None, :], np.swapaxes(U, 1, 2))
    return pinv, inv.max(axis=1), s[:, k - 1].copy()


def pinv_batch(X: np.ndarray, rel_tol: float | None = None):
    """Pseudoinverses of a stack of ``T x d`` matrices.

    Returns ``(pinv, opnorm, smin)``: the ``(n, d, T)`` pseudoinverses, the
    operator norm of each pseudoinverse (``1 / smallest kept singular value``,
    0 for an all-zero matrix) and the ``min(T, d)``-th singular value of each
    input.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if rel_tol is None:
        rel_tol = default_rel_tol(X.shape[1], X.shape[2])
    if BACKEND == "numba":
        return _pinv_batch_nb(X, float(rel_tol))
    return _pinv_batch_np(X, float(rel_tol))


# ---------------------------------------------------------------------------
# row-space projections and their Monte-Carlo moments
# ---------------------------------------------------------------------------

@njit(cache=True)
def _projection_moments_nb(X, P0, rel_tol):
    n, T, d = X.shape
    k = min(T, d)
    sum_p = np.zeros((d, d))
    sum_pp0p = np.zeros((d, d))
    for i in range(n):
        _, s, Vt = np.linalg.svd(np.ascontiguousarray(X[i]), full_matrices=False)
        cutoff = rel_tol * s[0]
        m = 0
        for j in range(k):
            if s[j] > cutoff and s[j] > 0.0:
                m += 1
        V = np.ascontiguousarray(Vt[:m, :])
        P = V.T @ V
        sum_p += P
        sum_pp0p += P @ P0 @ P
    return sum_p, sum_pp0p


def _row_projections_np(X, rel_tol):
    _, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = (s > rel_tol * s[:, :1]) & (s > 0.0)
    V = Vt * keep[:, :, None]
    return np.matmul(np.swapaxes(V, 1, 2), V)


def _projection_moments_np(X, P0, rel_tol):
    P = _row_projections_np(X, rel_tol)
    pp0p = np.matmul(np.matmul(P, P0), P)
    return P.sum(axis=0), pp0p.sum(axis=0)


def projection_moments(X: np.ndarray, P0: np.ndarray, rel_tol: float | None = None):
    """Sums of ``P_X`` and ``P_X P0 P_X`` over a stack of designs.

    ``P_X`` is the orthogonal projection onto the row space of each ``X``,
    built from its right singular vectors so it is exactly idempotent up to
    rounding even for badly conditioned ``X``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    P0 = np.ascontiguousarray(P0, dtype=np.float64)
    if rel_tol is None:
        rel_tol = default_rel_tol(X.shape[1], X.shape[2])
    if BACKEND == "numba":
        return _projection_moments_nb(X, P0, float(rel_tol))
    return _projection_moments_np(X, P0, float(rel_tol))


@njit(cache=True)
def _min_singular_values_nb(X):
    n, T, d = X.shape
    k = min(T, d)
    out = np.empty(n)
    for i in range(n):
        s = np.linalg.svd(np.ascontiguousarray(X[i]), full_matrices=False)[1]
        out[i] = s[k - 1]
    return out


def min_singular_values(X: np.ndarray) -> np.ndarray:
    """``sigma_min(T, d)`` of every matrix in the stack."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if BACKEND == "numba":
        return _min_singular_values_nb(X)
    k = min(X.shape[1], X.shape[2])
    return np.linalg.svd(X, compute_uv=False)[:, k - 1].copy()


# ---------------------------------------------------------------------------
# dense batched products used by the estimator
# ---------------------------------------------------------------------------

@njit(cache=True)
def _apply_batch_nb(A, Y):
    n, p, q = A.shape
    k = Y.shape[2]
    out = np.zeros((n, p, k))
    for i in range(n):
        for a in range(p):
            for b in range(q):
                aab = A[i, a, b]
                for c in range(k):
                    out[i, a, c] += aab * Y[i, b, c]
    return out


def apply_batch(A: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``A[i] @ Y[i]`` for stacks ``(n, p, q)`` and ``(n, q, k)``."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if BACKEND == "numba":
        return _apply_batch_nb(A, Y)
    return np.matmul(A, Y)
