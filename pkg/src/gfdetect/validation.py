"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

HERMITIAN_TOL = 1e-10


def check_snapshot_matrix(x, n_subcarriers: int | None = None) -> np.ndarray:
    """Validate an (n_snapshots, n_subcarriers) array of antenna snapshots."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D snapshot matrix, got ndim={x.ndim}")
    if x.shape[0] < 1:
        raise ValueError("need at least one snapshot row")
    if n_subcarriers is not None and x.shape[1] != n_subcarriers:
        raise ValueError(
            f"snapshot rows have length {x.shape[1]}, expected {n_subcarriers} subcarriers"
        )
    return np.ascontiguousarray(x, dtype=complex)


def check_covariance_matrix(a, n_subcarriers: int | None = None) -> np.ndarray:
    """Validate a Hermitian covariance matrix."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"covariance must be square, got shape {a.shape}")
    if n_subcarriers is not None and a.shape[0] != n_subcarriers:
        raise ValueError(f"covariance is {a.shape[0]}x{a.shape[0]}, expected {n_subcarriers}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL * scale:
        raise ValueError("covariance is not Hermitian within tolerance")
    return a


def check_soft_activities(soft, n: int | None = None) -> np.ndarray:
    """Validate a soft activity vector with entries in [0, 1]."""
    soft = np.asarray(soft, dtype=float)
    if soft.ndim != 1:
        raise ValueError("soft activities must be a 1-D vector")
    if n is not None and soft.size != n:
        raise ValueError(f"expected {n} activities, got {soft.size}")
    if np.any(soft < 0.0) or np.any(soft > 1.0):
        raise ValueError("soft activities must lie in [0, 1]")
    return soft
