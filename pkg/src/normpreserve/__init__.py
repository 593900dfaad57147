"""Normality-preserving Borel automorphisms of R^n: construction, checks and recovery."""

__version__ = "0.1.0"

from .gaussian import AffineMap, GaussianMeasure, affine_pushforward, log_density, sample, whitening_map
from .identity_checks import ClaimPair, IdentityReport, PushforwardClaim, run_identity_checks
from .mc_verify import VerificationPlan, VerificationReport, grid_density_oracle, verify_pushforward
from .recovery import (
    AffineRecoveryInput,
    PiecewiseRecoveryInput,
    isometry_certificate,
    recover_affine,
    recover_piecewise,
    whiten_and_recover,
)
from .transform import (
    PiecewiseSignOrthogonal,
    SymmetricProductPartition,
    exact_pushforward,
    image_cells,
    positive_measure_signs,
)

__all__ = [
    "AffineMap",
    "AffineRecoveryInput",
    "ClaimPair",
    "GaussianMeasure",
    "IdentityReport",
    "PiecewiseRecoveryInput",
    "PiecewiseSignOrthogonal",
    "PushforwardClaim",
    "SymmetricProductPartition",
    "VerificationPlan",
    "VerificationReport",
    "affine_pushforward",
    "exact_pushforward",
    "grid_density_oracle",
    "image_cells",
    "isometry_certificate",
    "log_density",
    "positive_measure_signs",
    "recover_affine",
    "recover_piecewise",
    "run_identity_checks",
    "sample",
    "verify_pushforward",
    "whiten_and_recover",
    "whitening_map",
]
