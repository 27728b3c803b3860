"""Subspace distances and parameter-error summaries."""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, InputError

_ORTHO_TOL = 1e-8


def _check_frames(A, B):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape != B.shape:
        raise DimensionError(f"frame shapes differ: {A.shape} vs {B.shape}")
    r = A.shape[1]
    for name, F in (("A", A), ("B", B)):
        if np.linalg.norm(F.T @ F - np.eye(r)) > _ORTHO_TOL:
            raise InputError(f"frame {name} is not orthonormal")
    return A, B


def _sines(A, B):
    # Singular values of (I - AA^T) B are the sines; accurate near zero angle.
    return np.sort(np.clip(np.linalg.svd(B - A @ (A.T @ B), compute_uv=False), 0.0, 1.0))


def principal_angles(A, B) -> np.ndarray:
    """Principal angles in radians, nondecreasing, in ``[0, pi/2]``."""
    A, B = _check_frames(A, B)
    cosines = np.sort(np.clip(np.linalg.svd(A.T @ B, compute_uv=False), 0.0, 1.0))[::-1]
    sines = _sines(A, B)
    # Pair largest cosine with smallest sine; atan2 is well conditioned everywhere.
    return np.sort(np.arctan2(sines, cosines))


def sin_theta_op(A, B) -> float:
    """Sine of the largest principal angle, equal to ``||AA^T - BB^T||_op``."""
    A, B = _check_frames(A, B)
    return float(np.max(_sines(A, B)))


def sin_theta_fro(A, B) -> float:
    """``||sin Theta(A, B)||_F``, equal to ``||AA^T - BB^T||_F / sqrt(2)``."""
    A, B = _check_frames(A, B)
    return float(np.linalg.norm(_sines(A, B)))


def param_errors(estimates, truth) -> dict:
    """Mean and population std of per-system Euclidean errors."""
    est = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    tru = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if est.shape != tru.shape:
        raise DimensionError(f"length mismatch: {est.shape} vs {tru.shape}")
    err = np.linalg.norm(est - tru, axis=1)
    return {"mean": float(err.mean()), "std": float(err.std()), "errors": err}
