"""Randomized SVD with a Monte Carlo harness for the expected sketch projector."""

__version__ = "0.1.0"

from .errors import (
    CheckpointMismatch,
    ConfigError,
    DegenerateColumn,
    DimensionMismatch,
    MatrixParseError,
    NoConvergence,
    NonFiniteResult,
    RankTooLarge,
    RsvdError,
    SingularGram,
    TheoremModeViolation,
)
from .linalg import (
    SvdResult,
    frobenius_norm,
    householder_qr_basis,
    jacobi_svd,
    matmul,
    transpose,
    truncate,
)
from .randgen import RngStream, SketchDistribution, derive_trial_seed, sample_scalar, sample_sketch
from .rsvd import (
    RsvdConfig,
    RsvdResult,
    exact_truncated_svd,
    lambda_integrand,
    power_sketch,
    projector_normal_eq,
    rsvd,
    sherman_morrison_check,
)
from .consistency import (
    PAPER_MATRIX,
    ConsistencyReport,
    ExperimentConfig,
    analyze,
    corollary_check,
    estimate_standard_errors,
    run_consistency,
)
