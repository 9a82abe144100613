"""Statistical device-activity detection for OFDM grant-free access.

Detects which devices transmitted their pilots under frequency-selective
Rayleigh fading, from the sample covariance of multi-antenna snapshots.
Six coordinate-descent detectors (ML and MAP variants over actual or
virtual per-tap devices), a generative signal model, activity priors,
and a deterministic Monte Carlo benchmark harness.
"""

from .detect import (
    DETECTOR_KINDS,
    ConditioningError,
    DetectionOutput,
    DetectorConfig,
    collapse_virtual,
    map_objective,
    ml_objective,
    penalty_residual,
    run_detector,
    threshold_activities,
)
from .estimator import ActivityDetector
from .linalg import (
    AllZeroPolynomialError,
    EigenPair,
    SingularUpdateError,
    dft_matrix,
    eig_hermitian,
    real_roots_in_interval,
    squared_factor_coeffs,
    woodbury_update,
)
from .priors import (
    GroupPrior,
    IidPrior,
    MvbPrior,
    contiguous_groups,
    epsilon_actual,
    epsilon_virtual,
    group_coefficients,
    log_pmf_unnormalized,
)
from .signal_model import (
    ChannelRealization,
    PilotSet,
    SampleCovariance,
    SystemConfig,
    build_pilot_set,
    draw_activities,
    draw_channel,
    effective_pilot,
    generate_pilots,
    load_pilots,
    model_covariance,
    sample_covariance,
    save_pilots,
    synthesize_received,
)

__version__ = "0.1.0"

__all__ = [
    "ActivityDetector",
    "AllZeroPolynomialError",
    "ChannelRealization",
    "ConditioningError",
    "DETECTOR_KINDS",
    "DetectionOutput",
    "DetectorConfig",
    "EigenPair",
    "GroupPrior",
    "IidPrior",
    "MvbPrior",
    "PilotSet",
    "SampleCovariance",
    "SingularUpdateError",
    "SystemConfig",
    "build_pilot_set",
    "collapse_virtual",
    "contiguous_groups",
    "dft_matrix",
    "draw_activities",
    "draw_channel",
    "effective_pilot",
    "eig_hermitian",
    "epsilon_actual",
    "epsilon_virtual",
    "generate_pilots",
    "group_coefficients",
    "load_pilots",
    "log_pmf_unnormalized",
    "map_objective",
    "ml_objective",
    "model_covariance",
    "penalty_residual",
    "real_roots_in_interval",
    "run_detector",
    "sample_covariance",
    "save_pilots",
    "squared_factor_coeffs",
    "synthesize_received",
    "threshold_activities",
    "woodbury_update",
]
