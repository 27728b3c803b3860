"""Monte-Carlo checks of the random-projection moments behind the estimator.

Each check draws Gaussian designs (whose row-space projection is uniform on the
Grassmannian), accumulates the relevant moment through the batched kernels,
and compares against the closed form. Default tolerances are
``constant / sqrt(samples)``; the constant is recorded in every report.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from ._seeding import substream
from .datagen import ModelConfig, generate_iid_dataset
from .errors import DimensionError, InputError
from .estimator import batched_first_step, default_threshold, process_first_step
from .metrics import sin_theta_op

CHUNK = 50_000

# tolerance = constant / sqrt(samples)
TOL_MEAN_PROJECTION = 6.0
TOL_SANDWICH = 10.0
GAP_REL_TOL = 0.25
SUBSPACE_TOL = 0.05
ISOTROPY_REL_TOL = 0.1
THRESHOLD_PROB_FLOOR = 0.3


@dataclass
class MomentCheckReport:
    name: str
    estimate: object
    target: object
    deviation: float
    tolerance: float
    samples: int
    d: int
    T: int
    r: int | None = None
    tolerance_constant: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.deviation <= self.tolerance)

    def row(self) -> dict:
        return {
            "check": self.name, "d": self.d, "T": self.T,
            "r": "" if self.r is None else self.r, "samples": self.samples,
            "deviation": self.deviation, "tolerance": self.tolerance,
            "pass": int(self.passed),
        }

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("estimate", "target"):
            if isinstance(out[key], np.ndarray):
                out[key] = out[key].tolist()
        out["pass"] = self.passed
        return out


def _gaussian_chunks(samples, T, d, seed, tag):
    """Yield ``(n, T, d)`` Gaussian blocks, one substream per chunk."""
    done, chunk_id = 0, 0
    while done < samples:
        n = min(CHUNK, samples - done)
        yield substream(seed, chunk_id, tag).standard_normal((n, T, d))
        done += n
        chunk_id += 1


def _default_tol(constant, samples):
    return constant / math.sqrt(samples)


def mc_mean_projection(d: int, T: int, samples: int, seed: int = 0,
                       tolerance: float | None = None) -> MomentCheckReport:
    """Average row-space projection of ``T x d`` Gaussian designs vs ``(T/d) I``."""
    if not 1 <= T <= d:
        raise DimensionError("mean projection check needs 1 <= T <= d")
    if samples < 1:
        raise ValueError("samples must be positive")
    total = np.zeros((d, d))
    zero = np.zeros((d, d))
    for X in _gaussian_chunks(samples, T, d, seed, "mean-projection"):
        total += _kernels.projection_moments(X, zero)[0]
    mean = total / samples
    target = (T / d) * np.eye(d)
    deviation = float(np.linalg.norm(mean - target, 2))
    if tolerance is None:
        tolerance = 1e-10 if T == d else _default_tol(TOL_MEAN_PROJECTION, samples)
    return MomentCheckReport("mean_projection", mean, target, deviation, tolerance,
                             samples, d, T, tolerance_constant=TOL_MEAN_PROJECTION)


def sandwich_closed_form(d: int, T: int, r: int) -> tuple[float, float]:
    """Coefficients ``(a, b)`` with ``E[P P0 P] = a P0 + b I`` for uniform ``P``."""
    if not 1 <= T <= d:
        raise DimensionError(f"need 1 <= T <= d, got T={T}, d={d}")
    if not 1 <= r <= d:
        raise DimensionError(f"need 1 <= r <= d, got r={r}, d={d}")
    if d == 1:
        return float(T), 0.0
    denom = (d - 1) * d * (d + 2)
    return (T * T * d + T * (d - 2)) / denom, r * T * (d - T) / denom


def mc_projection_sandwich(d: int, T: int, P0, samples: int, seed: int = 0,
                           r: int | None = None,
                           tolerance: float | None = None) -> MomentCheckReport:
    """Average ``P_X P0 P_X`` vs its closed form, entrywise max deviation."""
    P0 = np.asarray(P0, dtype=np.float64)
    if P0.shape != (d, d):
        raise DimensionError(f"P0 must be {d}x{d}")
    if (np.linalg.norm(P0 - P0.T) > 1e-10 or np.linalg.norm(P0 @ P0 - P0) > 1e-10):
        raise InputError("P0 is not a symmetric idempotent matrix")
    rank = int(round(np.trace(P0)))
    if r is not None and r != rank:
        raise InputError(f"P0 has rank {rank}, declared r={r}")
    if rank < 1:
        raise InputError("P0 must have rank at least 1")
    a, b = sandwich_closed_form(d, T, rank)
    total = np.zeros((d, d))
    for X in _gaussian_chunks(samples, T, d, seed, "sandwich"):
        total += _kernels.projection_moments(X, P0)[1]
    mean = total / samples
    target = a * P0 + b * np.eye(d)
    deviation = float(np.max(np.abs(mean - target)))
    if tolerance is None:
        tolerance = 1e-10 if T == d else _default_tol(TOL_SANDWICH, samples)
    return MomentCheckReport("sandwich", mean, target, deviation, tolerance, samples,
                             d, T, r=rank, tolerance_constant=TOL_SANDWICH,
                             details={"coef_P0": a, "coef_I": b})


def threshold_probability(d: int, T: int, s: float, samples: int, seed: int = 0) -> float:
    """Fraction of Gaussian ``T x d`` designs with ``||X^+||_op <= s``."""
    if samples < 1:
        raise ValueError("samples must be positive")
    if math.isinf(s):
        return 1.0
    if s <= 0:
        return 0.0
    hits = 0
    for X in _gaussian_chunks(samples, T, d, seed, "threshold"):
        hits += int(np.count_nonzero(_kernels.min_singular_values(X) >= 1.0 / s))
    return hits / samples


def mc_threshold_probability(d: int, T: int, s: float, samples: int, seed: int = 0,
                             floor: float = THRESHOLD_PROB_FLOOR) -> MomentCheckReport:
    """Empirical ``p_s``; passes when it is at least ``floor``.

    There is no closed form for ``p_s``, so ``deviation`` is the shortfall below
    the floor.
    """
    p = threshold_probability(d, T, s, samples, seed)
    return MomentCheckReport("threshold_probability", p, floor, max(0.0, floor - p), 0.0,
                             samples, d, T, details={"threshold": s, "p_s": p})


def spectral_gap_target(d: int, T: int, r: int, phi_moment: float, p_s: float) -> float:
    """Gap between the in-subspace and residual eigenvalues of ``E[beta beta^T]``.

    ``phi_moment`` is the per-coordinate second moment of the coefficients.
    """
    if T > d:
        return phi_moment * p_s
    return phi_moment * p_s * sandwich_closed_form(d, T, r)[0]


def covariance_structure_check(config: ModelConfig, samples: int, seed: int | None = None,
                               threshold: float | None = None, c0: float = 0.5,
                               gap_rel_tol: float = GAP_REL_TOL,
                               subspace_tol: float = SUBSPACE_TOL) -> MomentCheckReport:
    """Eigen-structure of the covariance of truncated first-step estimates.

    Uses ``samples`` systems drawn from ``config`` (its ``N`` is ignored). The
    covariance averages over all systems, truncated ones counting as zero, so
    its expectation is ``lambda P_B0 + mu I``. Checks that the top-``r``
    eigenspace is close to ``B0`` and that the measured gap matches
    ``lambda`` computed with a Monte-Carlo ``p_s``. For ``r == d`` the gap
    check is skipped; when ``lambda == 0`` the spectrum must be isotropic.
    """
    seed = config.seed if seed is None else seed
    d, r, T = config.d, config.r, config.T
    if threshold is None:
        threshold = default_threshold(d, T, c0)
    cfg = ModelConfig(d=d, r=r, T=T, N=samples, sigma_w=config.sigma_w,
                      phi_dist=config.phi_dist, sigma_phi=config.sigma_phi, seed=seed)
    data = generate_iid_dataset(cfg)
    raw, norms = batched_first_step(data, "pinv")
    kept = process_first_step(raw, "truncate", norms, threshold)
    cov = kept.processed.T @ kept.processed / samples
    evals, evecs = np.linalg.eigh(cov)
    evals, evecs = evals[::-1], evecs[:, ::-1]

    p_s = threshold_probability(d, T, threshold, samples, seed + 1)
    lam = spectral_gap_target(d, T, r, cfg.phi_second_moment, p_s)
    details = {"eigenvalues": evals.tolist(), "p_s": p_s, "lambda_target": lam,
               "threshold": threshold, "kept_fraction": kept.kept_indices.size / samples}

    if r == d:
        details["gap_check"] = "skipped: single cluster"
        deviation, tolerance = 0.0, 0.0
    elif lam == 0.0:
        spread = float((evals[0] - evals[-1]) / max(evals.mean(), 1e-300))
        details["isotropy_spread"] = spread
        deviation, tolerance = spread, ISOTROPY_REL_TOL
    else:
        sin = sin_theta_op(evecs[:, :r], data.truth.frame)
        gap = float(evals[:r].mean() - evals[r:].mean())
        rel = abs(gap - lam) / lam
        details.update(sin_theta_op=sin, gap=gap, gap_rel_error=rel,
                       residual_spread=float(evals[r] - evals[-1]))
        # Report the worse of the two checks, each scaled to its own tolerance.
        deviation = max(sin / subspace_tol, rel / gap_rel_tol)
        tolerance = 1.0
    return MomentCheckReport("covariance_structure", evals, lam, deviation, tolerance,
                             samples, d, T, r=r, details=details)
