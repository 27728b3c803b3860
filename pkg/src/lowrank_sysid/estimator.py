"""Three-step subspace and parameter estimator, plus baselines.

1. per-system first-step estimates ``X_i^+ Y_i`` (or ``X_i^T Y_i`` for MoM);
2. normalization or truncation, then the top-``r`` left singular vectors of
   the stacked estimates;
3. least squares restricted to the estimated subspace.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .datagen import Dataset
from .errors import DimensionError, EstimationError, InputError

log = logging.getLogger(__name__)

VARIANTS = ("normalize", "truncate", "mom", "none")
_ZERO_NORM = 1e-300
_TIE_GAP = 1e-12


class VacuousThresholdWarning(UserWarning):
    """Truncation threshold is infinite, so nothing is ever dropped."""


class RankDeficientSubspaceWarning(UserWarning):
    """Fewer first-step estimates than the subspace dimension."""


@dataclass
class FirstStepEstimates:
    raw: np.ndarray           # (M, d)
    processed: np.ndarray     # (K, d), K <= M
    kept_indices: np.ndarray  # (K,)
    variant: str
    threshold: float | None = None


@dataclass
class SubspaceEstimate:
    frame: np.ndarray  # (d, r)

    @property
    def projection(self) -> np.ndarray:
        return self.frame @ self.frame.T


@dataclass
class RefinedEstimates:
    coefficients: np.ndarray  # (M, r)
    parameters: np.ndarray    # (M, d)


def _check_finite(X):
    if not np.all(np.isfinite(X)):
        raise InputError("input contains non-finite entries")


def pseudoinverse(X, rel_tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``rel_tol * sigma_max`` are treated as zero;
    the default ``rel_tol`` is ``eps * max(T, d)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError("pseudoinverse expects a 2-D matrix")
    _check_finite(X)
    if rel_tol is not None and rel_tol < 0:
        raise ValueError("rel_tol must be nonnegative")
    pinv, _, _ = _kernels.pinv_batch(X[None], rel_tol)
    return pinv[0]


def _as_design_response(X, Y):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim not in (1, 2) or Y.shape[0] != X.shape[0]:
        raise DimensionError(f"shape mismatch: X {X.shape}, Y {Y.shape}")
    return X, Y


def first_step(X, Y) -> np.ndarray:
    """Minimum-norm least-squares estimate ``X^+ Y``."""
    X, Y = _as_design_response(X, Y)
    return pseudoinverse(X) @ Y


def mom_first_step(X, Y) -> np.ndarray:
    """Method-of-moments first step ``X^T Y`` (no ``1/T`` scaling)."""
    X, Y = _as_design_response(X, Y)
    return X.T @ Y


def default_threshold(d: int, T: int, c0: float = 0.5) -> float:
    """Truncation level ``1 / (c0 (sqrt d - sqrt(T-1)))`` (``T <= d``).

    For ``T > d`` the roles swap to ``1 / (c0 (sqrt T - sqrt d))``. At
    ``T == d`` the order-level formula degenerates; ``inf`` is returned with a
    ``VacuousThresholdWarning`` and callers should prefer normalization.
    """
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    if T <= d:
        gap = math.sqrt(d) - math.sqrt(T - 1)
    else:
        gap = math.sqrt(T) - math.sqrt(d)
    if T == d or gap <= 0:
        warnings.warn(
            f"truncation threshold is vacuous at T=d={d}; prefer normalization",
            VacuousThresholdWarning, stacklevel=2)
        return math.inf
    return 1.0 / (c0 * gap)


def process_first_step(raw, variant: str, pinv_norms=None,
                       threshold: float | None = None) -> FirstStepEstimates:
    """Normalize, truncate, or pass through raw first-step estimates."""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    if variant == "normalize":
        norms = np.linalg.norm(raw, axis=1)
        kept = np.flatnonzero(norms >= _ZERO_NORM)
        processed = raw[kept] / norms[kept, None]
    elif variant == "truncate":
        if threshold is None or pinv_norms is None:
            raise ValueError("truncation needs a threshold and per-system pinv norms")
        pinv_norms = np.asarray(pinv_norms, dtype=np.float64)
        if pinv_norms.shape != (raw.shape[0],):
            raise DimensionError("one pinv norm per first-step estimate required")
        kept = np.flatnonzero(pinv_norms <= threshold)
        processed = raw[kept]
    elif variant in ("none", "mom"):
        kept = np.arange(raw.shape[0])
        processed = raw
    else:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if kept.size == 0:
        raise EstimationError("no surviving first-step estimates")
    return FirstStepEstimates(raw=raw, processed=processed, kept_indices=kept,
                              variant=variant, threshold=threshold)


def _fix_signs(U: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(U), axis=0)  # argmax picks the lowest index on ties
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def recover_subspace(processed, r: int) -> SubspaceEstimate:
    """Top-``r`` left singular vectors of the ``d x M`` stacked estimates."""
    B = np.atleast_2d(np.asarray(processed, dtype=np.float64))
    M, d = B.shape
    if M == 0:
        raise EstimationError("no first-step estimates to recover a subspace from")
    if not 1 <= r <= d:
        raise DimensionError(f"need 1 <= r <= d, got r={r}, d={d}")
    if M < r:
        warnings.warn(f"only {M} estimates for an r={r} subspace; padding the frame",
                      RankDeficientSubspaceWarning, stacklevel=2)
    # Eigenvectors of the d x d Gram matrix would square the condition number.
    U, s, _ = np.linalg.svd(B.T, full_matrices=M < d)
    if r < s.size and s[0] > 0 and s[r - 1] - s[r] < _TIE_GAP * s[0]:
        log.info("singular value tie at rank %d (s_r=%.3g, s_r+1=%.3g)", r, s[r - 1], s[r])
    return SubspaceEstimate(frame=_fix_signs(U[:, :r]))


def refine(X, Y, frame):
    """Least squares over ``span(frame)``: ``phi = (X B)^+ Y``, ``beta = B phi``."""
    X, Y = _as_design_response(X, Y)
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2 or frame.shape[0] != X.shape[1]:
        raise DimensionError(f"frame shape {frame.shape} does not match d={X.shape[1]}")
    phi = pseudoinverse(X @ frame) @ Y
    return phi, frame @ phi


def oracle_estimate(X, Y, true_frame) -> np.ndarray:
    """Constrained least squares with the true subspace frame."""
    return refine(X, Y, true_frame)[1]


# ---------------------------------------------------------------------------
# batched pipeline over a Dataset
# ---------------------------------------------------------------------------

def batched_first_step(dataset: Dataset, method: str = "pinv"):
    """First-step estimates for every pseudo-system.

    Returns ``(raw, pinv_norms)`` of shapes ``(M, d)`` and ``(M,)``, ``M`` being
    the number of pseudo-systems; ``pinv_norms`` is ``None`` for MoM.
    """
    X, Yk = dataset.X, dataset.responses
    _check_finite(X)
    _check_finite(Yk)
    k = Yk.shape[2]
    if method == "pinv":
        pinv, opnorm, _ = _kernels.pinv_batch(X)
        est = _kernels.apply_batch(pinv, Yk)        # (N, d, k)
        norms = np.repeat(opnorm, k)
    elif method == "mom":
        est = _kernels.apply_batch(np.swapaxes(X, 1, 2), Yk)
        norms = None
    else:
        raise ValueError(f"unknown first-step method {method!r}")
    raw = np.swapaxes(est, 1, 2).reshape(-1, dataset.d)
    return raw, norms


def batched_refine(dataset: Dataset, frame: np.ndarray) -> RefinedEstimates:
    """Refinement for every pseudo-system against a common frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[0] != dataset.d:
        raise DimensionError(f"frame shape {frame.shape} does not match d={dataset.d}")
    Z = np.matmul(dataset.X, frame)                     # (N, T, r)
    pinv, _, _ = _kernels.pinv_batch(Z)
    phi = _kernels.apply_batch(pinv, dataset.responses)  # (N, r, k)
    phi = np.swapaxes(phi, 1, 2).reshape(-1, frame.shape[1])
    return RefinedEstimates(coefficients=phi, parameters=phi @ frame.T)


def estimate(dataset: Dataset, r: int, variant: str = "normalize",
             threshold: float | None = None, c0: float = 0.5):
    """Run the full three-step estimator.

    ``variant`` is ``"normalize"`` (default), ``"truncate"`` (threshold from
    ``default_threshold(d, T, c0)`` unless given) or ``"mom"``.
    Returns ``(SubspaceEstimate, RefinedEstimates, FirstStepEstimates)``.
    """
    if dataset.n_systems == 0:
        raise EstimationError("empty dataset")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    raw, norms = batched_first_step(dataset, "mom" if variant == "mom" else "pinv")
    if variant == "truncate" and threshold is None:
        threshold = default_threshold(dataset.d, dataset.T, c0)
    first = process_first_step(raw, variant, norms, threshold)
    subspace = recover_subspace(first.processed, r)
    refined = batched_refine(dataset, subspace.frame)
    return subspace, refined, first
