"""Joint estimation of a shared parameter subspace across many linear systems.

Each system ``i`` gives ``T`` noisy linear observations ``Y_i = X_i beta_i + w_i``
of a ``d``-dimensional parameter, possibly with ``T < d``. When all parameters
lie in a common ``r``-dimensional subspace, pooling per-system least-squares
estimates recovers that subspace, and each parameter can then be re-fit inside
it.
"""
from ._kernels import NUMBA_AVAILABLE, set_backend
from .datagen import (
    Dataset,
    GroundTruth,
    ModelConfig,
    TimeSeriesConfig,
    generate_iid_dataset,
    generate_timeseries_dataset,
    sample_orthonormal_frame,
)
from .errors import DimensionError, EstimationError, InputError
from .estimator import (
    FirstStepEstimates,
    RefinedEstimates,
    SubspaceEstimate,
    default_threshold,
    estimate,
    first_step,
    mom_first_step,
    oracle_estimate,
    process_first_step,
    pseudoinverse,
    recover_subspace,
    refine,
)
from .metrics import param_errors, principal_angles, sin_theta_fro, sin_theta_op

__version__ = "0.1.0"
