"""Synthetic problem instances with known ground truth.

Two generators are provided:

* i.i.d. regression: ``Y_i = X_i beta_i + w_i`` with Gaussian designs and
  ``beta_i = B0 phi_i`` in a shared ``r``-dimensional subspace;
* low-rank linear dynamics: ``x_{t+1} = A_i x_t + w_t`` where every row of
  ``A_i`` lies in a shared subspace. Each system contributes ``d`` row
  regressions ("pseudo-systems") that share the design ``X_i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._seeding import substream
from .errors import DimensionError

PHI_DISTS = ("unit-ball", "gaussian")
DATASET_KINDS = ("iid-regression", "time-series")


@dataclass(frozen=True)
class ModelConfig:
    d: int
    r: int
    T: int
    N: int
    sigma_w: float = 0.1
    phi_dist: str = "unit-ball"
    sigma_phi: float | None = None  # gaussian only; default sqrt(1/r)
    seed: int = 0

    def __post_init__(self):
        for name in ("d", "r", "T", "N"):
            if int(getattr(self, name)) < 1:
                raise DimensionError(f"{name} must be a positive integer")
        if self.r > self.d:
            raise DimensionError(f"r={self.r} exceeds d={self.d}")
        if not self.sigma_w >= 0:
            raise ValueError("sigma_w must be nonnegative")
        if self.phi_dist not in PHI_DISTS:
            raise ValueError(f"phi_dist must be one of {PHI_DISTS}")
        if self.sigma_phi is not None and not self.sigma_phi >= 0:
            raise ValueError("sigma_phi must be nonnegative")

    @property
    def phi_scale(self) -> float:
        """Per-coordinate standard deviation of Gaussian coefficients."""
        if self.sigma_phi is not None:
            return float(self.sigma_phi)
        return float(np.sqrt(1.0 / self.r))

    @property
    def phi_variance(self) -> float:
        """Coefficient variance proxy; 1/r for unit-ball coefficients."""
        if self.phi_dist == "unit-ball":
            return 1.0 / self.r
        return self.phi_scale ** 2

    @property
    def phi_second_moment(self) -> float:
        """Per-coordinate ``E[phi_k^2]``; ``1/(r+2)`` for unit-ball coefficients."""
        if self.phi_dist == "unit-ball":
            return 1.0 / (self.r + 2)
        return self.phi_scale ** 2


@dataclass(frozen=True)
class TimeSeriesConfig(ModelConfig):
    sigma_x: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not self.sigma_x > 0:
            raise ValueError("sigma_x must be positive")


@dataclass
class GroundTruth:
    frame: np.ndarray          # (d, r), orthonormal columns
    coefficients: np.ndarray   # (M, r)
    parameters: np.ndarray     # (M, d), parameters[i] = frame @ coefficients[i]
    dynamics: np.ndarray | None = None  # (N, d, d) for time series


@dataclass
class Dataset:
    """Stacked observations.

    ``X`` has shape ``(N, T, d)``. ``Y`` is ``(N, T)`` for i.i.d. data and
    ``(N, T, d)`` for time series, where column ``j`` of ``Y[i]`` is the
    response of pseudo-system ``i * d + j``.
    """

    X: np.ndarray
    Y: np.ndarray
    kind: str = "iid-regression"
    truth: GroundTruth | None = None
    noise: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.X.ndim != 3:
            raise DimensionError("X must have shape (N, T, d)")
        if self.Y.shape[:2] != self.X.shape[:2] or self.Y.ndim not in (2, 3):
            raise DimensionError("Y must have shape (N, T) or (N, T, k)")

    @property
    def n_systems(self) -> int:
        return self.X.shape[0]

    @property
    def T(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[2]

    @property
    def responses(self) -> np.ndarray:
        """``Y`` as ``(N, T, k)``."""
        return self.Y[:, :, None] if self.Y.ndim == 2 else self.Y

    @property
    def responses_per_system(self) -> int:
        return 1 if self.Y.ndim == 2 else self.Y.shape[2]

    @property
    def n_pseudo(self) -> int:
        return self.n_systems * self.responses_per_system

    def pseudo_index(self) -> np.ndarray:
        """System index of every pseudo-system."""
        return np.repeat(np.arange(self.n_systems), self.responses_per_system)


def sample_orthonormal_frame(d: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed ``d x r`` frame (QR of a Gaussian matrix, sign-corrected)."""
    if not 1 <= r <= d:
        raise DimensionError(f"need 1 <= r <= d, got r={r}, d={d}")
    G = rng.standard_normal((d, r))
    Q, R = np.linalg.qr(G)
    # Without the sign fix, QR output is not rotation-invariant.
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def sample_unit_ball(r: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal(r)
    u = rng.uniform()
    norm = np.linalg.norm(g)
    if norm == 0.0:
        return np.zeros(r)
    return g * u ** (1.0 / r) / norm


def _sample_coefficients(config: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    if config.phi_dist == "unit-ball":
        return sample_unit_ball(config.r, rng)
    return config.phi_scale * rng.standard_normal(config.r)


def generate_iid_dataset(config: ModelConfig, seed: int | None = None) -> Dataset:
    """Draw an i.i.d. regression instance; reproducible from ``(config, seed)``."""
    seed = config.seed if seed is None else seed
    d, r, T, N = config.d, config.r, config.T, config.N
    frame = sample_orthonormal_frame(d, r, substream(seed, 0, "frame"))
    X = np.empty((N, T, d))
    phi = np.empty((N, r))
    w = np.empty((N, T))
    for i in range(N):
        X[i] = substream(seed, i, "design").standard_normal((T, d))
        phi[i] = _sample_coefficients(config, substream(seed, i, "coef"))
        w[i] = config.sigma_w * substream(seed, i, "noise").standard_normal(T)
    beta = phi @ frame.T
    Y = np.einsum("ntd,nd->nt", X, beta) + w
    truth = GroundTruth(frame=frame, coefficients=phi, parameters=beta)
    return Dataset(X=X, Y=Y, kind="iid-regression", truth=truth, noise=w)


def generate_timeseries_dataset(config: TimeSeriesConfig, seed: int | None = None) -> Dataset:
    """Simulate ``N`` trajectories of length ``T + 1`` with low-rank dynamics.

    ``A_i = F_i B^T / ||F_i B^T||_op`` with ``F_i`` standard normal ``d x r``.
    The design is ``[x_0; ...; x_{T-1}]`` and the responses ``[x_1; ...; x_T]``.
    """
    seed = config.seed if seed is None else seed
    d, r, T, N = config.d, config.r, config.T, config.N
    sigma_x = getattr(config, "sigma_x", 1.0)
    frame = sample_orthonormal_frame(d, r, substream(seed, 0, "frame"))
    A = np.empty((N, d, d))
    coef = np.empty((N, d, r))
    states = np.empty((N, T + 1, d))
    noise = np.empty((N, T, d))
    for i in range(N):
        F = substream(seed, i, "dynamics").standard_normal((d, r))
        # ||F B^T||_op == ||F||_op because B has orthonormal columns.
        scale = np.linalg.norm(F @ frame.T, 2)
        coef[i] = F / scale
        A[i] = coef[i] @ frame.T
        states[i, 0] = sigma_x * substream(seed, i, "init").standard_normal(d)
        noise[i] = config.sigma_w * substream(seed, i, "noise").standard_normal((T, d))
        for t in range(T):
            states[i, t + 1] = A[i] @ states[i, t] + noise[i, t]
    X = states[:, :-1, :].copy()
    Y = states[:, 1:, :].copy()
    # Row j of A_i is frame @ coef[i, j]; pseudo-system i*d + j.
    truth = GroundTruth(
        frame=frame,
        coefficients=coef.reshape(N * d, r),
        parameters=A.reshape(N * d, d),
        dynamics=A,
    )
    return Dataset(X=X, Y=Y, kind="time-series", truth=truth, noise=noise)
