"""Coordinate-descent activity detectors.

Six detector kinds share one engine family.  All of them minimize a
negative log-likelihood of the form log|Sigma(x)| + tr(Sigma(x)^{-1}
SampleCov) over soft activities x in [0,1], one coordinate at a time,
where Sigma(x) is the model covariance implied by the activities:

* ``ml-act``       per-device coordinates; each step solves a rank-P
                   subproblem whose stationary points are roots of a
                   degree 2P-1 polynomial.
* ``ml-virt-pen``  per-tap (virtual device) coordinates with a quadratic
                   penalty driving the taps of one device to a common
                   value; stationary points are roots of a cubic.
* ``ml-virt-rel``  per-tap coordinates with the tap-consistency
                   constraint dropped; the step has a closed form.
* ``map-act``, ``map-virt-pen``, ``map-virt-rel``
                   the same three with the activity-prior exponent
                   (scaled by 1/M) folded into the objective.
* ``bl-ml-flat``   flat-fading baseline: rank-one relaxed descent over N
                   single-tap signatures, ignoring frequency selectivity.

The L x L inverse of the model covariance is maintained incrementally by
rank updates and re-inverted from scratch every ``refresh_interval``
accepted steps to bound drift.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .linalg import (
    AllZeroPolynomialError,
    SingularUpdateError,
    dft_matrix,
    hermitize,
    real_roots_in_interval,
    squared_factor_list,
    woodbury_update,
)
from .signal_model import PilotSet, SampleCovariance, SystemConfig, model_covariance
from .streams import PURPOSE_ORDER, substream

DETECTOR_KINDS = (
    "ml-act",
    "ml-virt-pen",
    "ml-virt-rel",
    "map-act",
    "map-virt-pen",
    "map-virt-rel",
    "bl-ml-flat",
)

_ACTUAL_KINDS = ("ml-act", "map-act")
_MAP_KINDS = ("map-act", "map-virt-pen", "map-virt-rel")
_PENALTY_KINDS = ("ml-virt-pen", "map-virt-pen")

# Objective ties within this band are broken toward the smallest move.
TIE_TOL = 1e-12
# Signature energies below this floor leave the covariance unchanged.
GAMMA_FLOOR = 1e-300


class ConditioningError(np.linalg.LinAlgError):
    """Model covariance lost positive definiteness; carries the last state."""

    def __init__(self, message, soft=None, sweep=None):
        super().__init__(message)
        self.soft = soft
        self.sweep = sweep


@dataclass
class DetectorConfig:
    """Detector kind and iteration controls.

    ``rho`` is the penalty weight for the *-pen kinds; ``rho_growth`` > 1
    scales it geometrically each sweep up to ``rho_max`` (off by default,
    which keeps the recorded objective trace monotone).  A sweep stops
    the run when it decreases the objective by less than
    ``tol * (1 + |objective|)``.
    """

    kind: str = "ml-act"
    rho: float = 1.0
    rho_growth: float = 1.0
    rho_max: float = 1e3
    max_sweeps: int = 50
    tol: float = 1e-6
    refresh_interval: int = 100
    coordinate_order: str = "natural"
    order_seed: int = 0

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.kind in _PENALTY_KINDS and not self.rho > 0.0:
            raise ValueError("penalty kinds require rho > 0")
        if self.coordinate_order not in ("natural", "random-per-sweep"):
            raise ValueError(f"unknown coordinate order {self.coordinate_order!r}")
        if self.max_sweeps < 1 or self.refresh_interval < 1:
            raise ValueError("max_sweeps and refresh_interval must be >= 1")
        if self.tol < 0.0 or self.rho_growth < 1.0:
            raise ValueError("tol must be >= 0 and rho_growth >= 1")


@dataclass
class DetectionOutput:
    """Result of one detector run."""

    kind: str
    soft: np.ndarray                     # per-device soft activities (N,)
    soft_virtual: np.ndarray | None      # per-tap activities for virtual kinds
    objective_trace: np.ndarray          # initial objective, then one entry per sweep
    sweeps: int
    runtime_ms: float
    inverse_drift: float                 # max |maintained - direct| inverse at exit
    tie_count: int                       # coordinate steps with non-unique minimizers

    def binary(self, theta: float) -> np.ndarray:
        return threshold_activities(self.soft, theta)


def collapse_virtual(beta: np.ndarray, n_taps: int) -> np.ndarray:
    """Per-device tap mean of a virtual activity vector."""
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.size % n_taps != 0:
        raise ValueError(f"length {beta.size} is not a multiple of n_taps={n_taps}")
    return beta.reshape(-1, n_taps).mean(axis=1)


def threshold_activities(soft: np.ndarray, theta: float) -> np.ndarray:
    """Binary decisions: 1 where soft activity strictly exceeds theta."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {theta}")
    return (np.asarray(soft) > theta).astype(np.int8)


def penalty_residual(beta: np.ndarray, n_taps: int) -> float:
    """Tap-consistency penalty: sum over devices of mean*(1 - mean)."""
    means = collapse_virtual(beta, n_taps)
    return float(np.sum(means * (1.0 - means)))


# ---------------------------------------------------------------------------
# objectives


def _neg_loglik(cov: np.ndarray, sample_matrix: np.ndarray) -> float:
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("model covariance is not positive definite") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diagonal(chol).real)))
    trace = float(np.trace(np.linalg.solve(cov, sample_matrix)).real)
    return logdet + trace


def ml_objective(sample_cov: SampleCovariance, pilots: PilotSet, system: SystemConfig,
                 activities: np.ndarray, virtual: bool = False) -> float:
    """Negative log-likelihood log|Sigma| + tr(Sigma^{-1} SampleCov)."""
    cov = model_covariance(pilots, system, activities, virtual=virtual)
    return _neg_loglik(cov, sample_cov.matrix)


def map_objective(sample_cov: SampleCovariance, pilots: PilotSet, system: SystemConfig,
                  activities: np.ndarray, prior, virtual: bool = False) -> float:
    """ML objective minus the prior exponent scaled by 1/M.

    The prior's intractable normalizer is omitted; it shifts the
    objective by a constant and leaves the minimizer unchanged.
    """
    base = ml_objective(sample_cov, pilots, system, activities, virtual=virtual)
    if virtual:
        exponent = prior.exponent_virtual(activities, system.n_taps)
    else:
        exponent = prior.exponent(activities)
    return base - exponent / sample_cov.n_snapshots


# ---------------------------------------------------------------------------
# per-coordinate subproblems, actual-device family


def coordinate_quadratic(sigma_inv: np.ndarray, sample_matrix: np.ndarray,
                         block: np.ndarray, gain: float) -> tuple[np.ndarray, np.ndarray]:
    """Spectral data (v, u) of one device's coordinate subproblem.

    v are the eigenvalues of gain * B^H Sigma^{-1} B and u the matching
    diagonal of the rotated matrix gain * B^H Sigma^{-1} SampleCov
    Sigma^{-1} B; both absorb the large-scale gain, so the per-coordinate
    objective is sum_p [log(1 + v_p d) - d u_p / (1 + v_p d)].
    """
    w = sigma_inv @ block
    if block.shape[1] == 1:
        col = block[:, 0]
        wc = w[:, 0]
        v = gain * (col.conj() @ wc).real
        u = gain * (wc.conj() @ (sample_matrix @ wc)).real
        return np.array([max(v, 0.0)]), np.array([max(u, 0.0)])
    t = gain * hermitize(block.conj().T @ w)
    t_hat = gain * (w.conj().T @ (sample_matrix @ w))
    if t.shape[0] == 2:
        values, vectors = _eigh_2x2(t)
    else:
        values, vectors = np.linalg.eigh(t)
    u = np.einsum("ij,ij->j", vectors.conj(), t_hat @ vectors).real
    return np.maximum(values, 0.0), np.maximum(u, 0.0)


def _eigh_2x2(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form Hermitian 2x2 eigendecomposition (ascending values).

    For near-degenerate spectra any orthonormal basis of the eigenspace
    is acceptable: the per-coordinate objective depends on the rotated
    diagonal only through sums over the degenerate block.
    """
    a = t[0, 0].real
    c = t[1, 1].real
    b = t[0, 1]
    babs2 = b.real * b.real + b.imag * b.imag
    half_gap = math.hypot(0.5 * (a - c), math.sqrt(babs2))
    mid = 0.5 * (a + c)
    lo, hi = mid - half_gap, mid + half_gap
    if babs2 <= 1e-30 * max(1.0, a * a, c * c):
        if a <= c:
            return np.array([a, c]), np.eye(2, dtype=complex)
        return np.array([c, a]), np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    # eigenvector for lo: (b, lo - a), normalized; hi's is its orthogonal
    norm = math.sqrt(babs2 + (lo - a) ** 2)
    v0, v1 = b / norm, (lo - a) / norm
    vectors = np.array([[v0, -np.conj(v1)], [v1, np.conj(v0)]])
    return np.array([lo, hi]), vectors


def objective_actual(v: np.ndarray, u: np.ndarray, d, prior_slope: float = 0.0):
    """Per-coordinate objective change for an actual-device step of size d.

    ``prior_slope`` is epsilon_n / M for the MAP variant (0 for ML).
    Vectorized over d; infeasible steps (covariance leaving the PD cone)
    evaluate to +inf.
    """
    d = np.asarray(d, dtype=float)
    terms = 1.0 + np.multiply.outer(d, v)
    valid = np.all(terms > 0.0, axis=-1)
    safe = np.where(terms > 0.0, terms, 1.0)
    val = np.sum(np.log(safe), axis=-1) - np.sum(
        (d[..., None] * u) / safe, axis=-1
    ) - d * prior_slope
    return np.where(valid, val, np.inf) if val.ndim else (val if valid else np.inf)


def derivative_poly_actual(v: np.ndarray, u: np.ndarray,
                           prior_slope: float = 0.0) -> np.ndarray:
    """Ascending coefficients of the derivative numerator of the step objective.

    sum_p (v_p (1 + v_p d) - u_p) * prod_{q != p} (1 + v_q d)^2, minus the
    prior slope times the full squared product for the MAP variant; the
    denominator is prod_p (1 + v_p d)^2 > 0 on the feasible interval.
    """
    p = len(v)
    coeffs = [0.0] * (2 * p + 1)
    for k in range(p):
        a0 = float(v[k] - u[k])
        a1 = float(v[k] * v[k])
        for t, c in enumerate(squared_factor_list(v, exclude=k)):
            coeffs[t] += a0 * c
            coeffs[t + 1] += a1 * c
    if prior_slope != 0.0:
        for t, c in enumerate(squared_factor_list(v)):
            coeffs[t] -= prior_slope * c
    return np.asarray(coeffs)


def _pick_candidate(candidates, values) -> tuple[float, bool]:
    best = min(values)
    band = best + TIE_TOL * (1.0 + abs(best))
    choice = None
    for d, value in zip(candidates, values):
        if value <= band and (choice is None or abs(d) < abs(choice)):
            choice = d
    tied = any(value <= band and abs(d - choice) > 1e-10
               for d, value in zip(candidates, values))
    return float(choice), tied


def _phi_actual(v, u, d: float, prior_slope: float) -> float:
    total = -d * prior_slope
    for vp, up in zip(v, u):
        term = 1.0 + vp * d
        if term <= 0.0:
            return math.inf
        total += math.log(term) - d * up / term
    return total


def increment_actual(v: np.ndarray, u: np.ndarray, lo: float, hi: float,
                     prior_slope: float = 0.0) -> tuple[float, bool]:
    """Optimal actual-device step on [lo, hi]: best of the interior
    stationary points (polynomial roots) and the interval endpoints."""
    try:
        roots = real_roots_in_interval(derivative_poly_actual(v, u, prior_slope), lo, hi)
    except AllZeroPolynomialError:
        roots = ()
    candidates = [*roots, lo, 0.0, hi]
    values = [_phi_actual(v, u, d, prior_slope) for d in candidates]
    return _pick_candidate(candidates, values)


# ---------------------------------------------------------------------------
# per-coordinate subproblems, virtual-device (rank-one) family


def rank_one_stats(sigma_inv: np.ndarray, sample_matrix: np.ndarray,
                   column: np.ndarray) -> tuple[float, float]:
    """Scalars (s^H Sigma^{-1} s, s^H Sigma^{-1} SampleCov Sigma^{-1} s)."""
    w = sigma_inv @ column
    gam = float((column.conj() @ w).real)
    gam_hat = float((w.conj() @ (sample_matrix @ w)).real)
    return max(gam, 0.0), max(gam_hat, 0.0)


def objective_virtual(gam: float, gam_hat: float, delta: float, d,
                      rho: float = 0.0, n_taps: int = 1, tap_sum: float = 0.0,
                      prior_slope: float = 0.0):
    """Per-coordinate objective change for a virtual-device step of size d.

    Covers all rank-one kinds: rho > 0 adds the tap-consistency penalty
    term (tap_sum is the current sum of the device's tap activities,
    including this coordinate) and ``prior_slope`` is epsilon-bar / M for
    the MAP variants.
    """
    d = np.asarray(d, dtype=float)
    denom = 1.0 + d * delta * gam
    valid = denom > 0.0
    safe = np.where(valid, denom, 1.0)
    val = np.log(safe) - d * delta * gam_hat / safe - d * prior_slope
    if rho != 0.0:
        val = val + rho * (d / n_taps) * (1.0 - d / n_taps - 2.0 * tap_sum / n_taps)
    return np.where(valid, val, np.inf) if val.ndim else (val if valid else np.inf)


def penalty_cubic(gam: float, gam_hat: float, delta: float, rho: float,
                  n_taps: int, tap_sum: float, prior_slope: float = 0.0) -> np.ndarray:
    """Ascending coefficients of the penalized step derivative numerator.

    The denominator is (1 + d * delta * gam)^2 > 0 on the feasible
    interval.  ``prior_slope`` folds in the MAP correction.
    """
    p = float(n_taps)
    cbar = 1.0 - 2.0 * tap_sum / p
    dg = delta * gam
    a3 = -2.0 * rho * dg * dg / (p * p)
    a2 = rho * cbar * dg * dg / p - 4.0 * rho * dg / (p * p)
    a1 = dg * dg + 2.0 * rho * cbar * dg / p - 2.0 * rho / (p * p)
    a0 = dg - delta * gam_hat + rho * cbar / p
    if prior_slope != 0.0:
        a2 -= prior_slope * dg * dg
        a1 -= 2.0 * prior_slope * dg
        a0 -= prior_slope
    return np.array([a0, a1, a2, a3])


def _phi_virtual(gam: float, gam_hat: float, delta: float, d: float, rho: float,
                 n_taps: int, tap_sum: float, prior_slope: float) -> float:
    denom = 1.0 + d * delta * gam
    if denom <= 0.0:
        return math.inf
    value = math.log(denom) - d * delta * gam_hat / denom - d * prior_slope
    if rho != 0.0:
        value += rho * (d / n_taps) * (1.0 - d / n_taps - 2.0 * tap_sum / n_taps)
    return value


def increment_virtual_penalty(gam: float, gam_hat: float, delta: float, rho: float,
                              n_taps: int, tap_sum: float, lo: float, hi: float,
                              prior_slope: float = 0.0) -> tuple[float, bool]:
    """Optimal penalized virtual-device step: cubic roots plus endpoints."""
    try:
        roots = real_roots_in_interval(
            penalty_cubic(gam, gam_hat, delta, rho, n_taps, tap_sum, prior_slope), lo, hi
        )
    except AllZeroPolynomialError:
        roots = ()
    candidates = [*roots, lo, 0.0, hi]
    values = [_phi_virtual(gam, gam_hat, delta, d, rho, n_taps, tap_sum, prior_slope)
              for d in candidates]
    return _pick_candidate(candidates, values)


def increment_virtual_relaxed(gam: float, gam_hat: float, delta: float,
                              lo: float, hi: float) -> float:
    """Closed-form relaxed ML step: clip((gam_hat - gam) / (delta gam^2)).

    The clipped stationary point is compared against the endpoints and
    the zero step under the shared tie rule, so steps that improve the
    objective by less than the tie tolerance collapse to zero exactly as
    in the polynomial-based updates.
    """
    if gam <= GAMMA_FLOOR:
        return 0.0
    stationary = (gam_hat - gam) / (delta * gam * gam)
    candidates = [min(max(stationary, lo), hi), lo, 0.0, hi]
    values = [_phi_virtual(gam, gam_hat, delta, d, 0.0, 1, 0.0, 0.0) for d in candidates]
    step, _ = _pick_candidate(candidates, values)
    return step


def increment_virtual_relaxed_map(gam: float, gam_hat: float, delta: float,
                                  prior_slope: float, lo: float, hi: float) -> tuple[float, bool]:
    """Closed-form relaxed MAP step with case analysis on the prior slope.

    The stationary points of the step objective solve a quadratic whose
    smaller root is the only interior local minimum.  For non-positive
    slope (activity probability <= 1/2) its clip to the interval is
    optimal; for positive slope the objective eventually decreases again,
    so the right endpoint competes.  The slope -> 0 limit reproduces the
    relaxed ML step exactly.
    """
    if gam <= GAMMA_FLOOR:
        return 0.0, False
    dg = delta * gam
    if prior_slope == 0.0:
        return increment_virtual_relaxed(gam, gam_hat, delta, lo, hi), False
    disc = 1.0 - 4.0 * prior_slope * gam_hat / (delta * gam * gam)
    if prior_slope > 0.0 and disc <= 0.0:
        return hi, False
    if prior_slope < 0.0 and disc < 1.0:
        raise AssertionError("discriminant below one with non-positive slope")
    # Stable form of (1 - sqrt(disc)) / (2 slope) - 1 / (delta gam):
    # no cancellation as the slope vanishes.
    stationary = 2.0 * gam_hat / (delta * gam * gam * (1.0 + math.sqrt(disc))) - 1.0 / dg
    candidates = [min(max(stationary, lo), hi), lo, 0.0, hi]
    values = [_phi_virtual(gam, gam_hat, delta, d, 0.0, 1, 0.0, prior_slope)
              for d in candidates]
    return _pick_candidate(candidates, values)


# ---------------------------------------------------------------------------
# detector engine


def flat_signatures(pilots: PilotSet) -> np.ndarray:
    """Single-tap signature per device: the first effective-pilot column.

    Equals the normalized time-domain pilot F^H s / sqrt(L); at one
    channel tap this is exactly the device's effective pilot matrix, so
    the baseline coincides with the matched detectors on single-tap data.
    """
    n_sub = pilots.n_subcarriers
    f = dft_matrix(n_sub)
    return (f.conj().T @ pilots.frequency) / np.sqrt(n_sub)


def _columns_for_kind(pilots: PilotSet, system: SystemConfig, kind: str):
    if kind == "bl-ml-flat":
        return flat_signatures(pilots), system.gains.copy(), 1
    return pilots.stacked, system.virtual_gains, system.n_taps


def _inverse_of(cov: np.ndarray) -> np.ndarray:
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("model covariance is not positive definite") from exc
    return hermitize(np.linalg.solve(cov, np.eye(cov.shape[0], dtype=complex)))


def _covariance_from_columns(columns: np.ndarray, weights: np.ndarray,
                             noise_var: float) -> np.ndarray:
    cov = (columns * weights) @ columns.conj().T
    cov.flat[:: cov.shape[0] + 1] += noise_var
    return hermitize(cov)


def run_detector(sample_cov: SampleCovariance, pilots: PilotSet, system: SystemConfig,
                 config: DetectorConfig | None = None, prior=None) -> DetectionOutput:
    """Run one coordinate-descent detector to convergence.

    Sweeps update one coordinate at a time, skipping zero increments, and
    maintain the covariance inverse by rank updates with periodic full
    re-inversions.  The run stops when a full sweep decreases this kind's
    objective by less than ``tol * (1 + |objective|)`` or after
    ``max_sweeps`` sweeps.  Virtual activity vectors are collapsed to
    per-device activities by tap averaging.
    """
    config = config or DetectorConfig()
    kind = config.kind
    if kind in _MAP_KINDS and prior is None:
        raise ValueError(f"detector kind {kind!r} requires a prior")
    started = time.perf_counter()

    if kind in _ACTUAL_KINDS:
        out = _run_actual(sample_cov, pilots, system, config, prior)
    else:
        out = _run_rank_one(sample_cov, pilots, system, config, prior)
    out.runtime_ms = (time.perf_counter() - started) * 1e3
    return out


def _stop(previous: float, current: float, tol: float) -> bool:
    return previous - current < tol * (1.0 + abs(current))


def _sweep_order(config: DetectorConfig, n_coords: int, sweep: int) -> np.ndarray:
    if config.coordinate_order == "natural":
        return np.arange(n_coords)
    rng = substream(config.order_seed, PURPOSE_ORDER, sweep)
    return rng.permutation(n_coords)


def _run_actual(sample_cov, pilots, system, config, prior) -> DetectionOutput:
    sample = sample_cov.matrix
    m_snap = sample_cov.n_snapshots
    blocks, gains = pilots.blocks, system.gains
    n = system.n_devices
    noise_var = system.noise_var
    is_map = config.kind == "map-act"

    act = np.zeros(n)
    sigma_inv = np.eye(system.n_subcarriers, dtype=complex) / noise_var
    updates = 0
    ties = 0

    def objective() -> float:
        cov = model_covariance(pilots, system, act)
        value = _neg_loglik(cov, sample)
        if is_map:
            value -= prior.exponent(act) / m_snap
        return value

    def refresh():
        nonlocal sigma_inv
        sigma_inv = _inverse_of(model_covariance(pilots, system, act))

    trace = [objective()]
    sweeps = 0
    for sweep in range(1, config.max_sweeps + 1):
        sweeps = sweep
        for idx in _sweep_order(config, n, sweep):
            block = blocks[idx]
            v, u = coordinate_quadratic(sigma_inv, sample, block, gains[idx])
            slope = prior.epsilon(idx, act) / m_snap if is_map else 0.0
            step, tied = increment_actual(v, u, -act[idx], 1.0 - act[idx], slope)
            ties += tied
            if step != 0.0:
                act[idx] = min(max(act[idx] + step, 0.0), 1.0)
                try:
                    sigma_inv = woodbury_update(sigma_inv, block, step * gains[idx])
                except SingularUpdateError:
                    refresh()
                updates += 1
                if updates % config.refresh_interval == 0:
                    refresh()
        try:
            trace.append(objective())
        except ConditioningError as exc:
            exc.soft, exc.sweep = act.copy(), sweep
            raise
        if _stop(trace[-2], trace[-1], config.tol):
            break

    drift = float(np.max(np.abs(sigma_inv - _inverse_of(model_covariance(pilots, system, act)))))
    return DetectionOutput(kind=config.kind, soft=act, soft_virtual=None,
                           objective_trace=np.asarray(trace), sweeps=sweeps,
                           runtime_ms=0.0, inverse_drift=drift, tie_count=ties)


def _run_rank_one(sample_cov, pilots, system, config, prior) -> DetectionOutput:
    sample = sample_cov.matrix
    m_snap = sample_cov.n_snapshots
    kind = config.kind
    columns, deltas, n_taps = _columns_for_kind(pilots, system, kind)
    n_coords = columns.shape[1]
    noise_var = system.noise_var
    penalized = kind in _PENALTY_KINDS
    is_map = kind in _MAP_KINDS
    is_flat = kind == "bl-ml-flat"

    act = np.zeros(n_coords)
    sigma_inv = np.eye(system.n_subcarriers, dtype=complex) / noise_var
    updates = 0
    ties = 0
    rho = config.rho

    def objective() -> float:
        cov = _covariance_from_columns(columns, act * deltas, noise_var)
        value = _neg_loglik(cov, sample)
        if is_map:
            value -= prior.exponent_virtual(act, n_taps) / m_snap
        if penalized:
            value += rho * penalty_residual(act, n_taps)
        return value

    def refresh():
        nonlocal sigma_inv
        sigma_inv = _inverse_of(_covariance_from_columns(columns, act * deltas, noise_var))

    trace = [objective()]
    sweeps = 0
    for sweep in range(1, config.max_sweeps + 1):
        sweeps = sweep
        for idx in _sweep_order(config, n_coords, sweep):
            column = columns[:, idx]
            delta = deltas[idx]
            gam, gam_hat = rank_one_stats(sigma_inv, sample, column)
            lo, hi = -act[idx], 1.0 - act[idx]
            slope = prior.epsilon_virtual(idx, act, n_taps) / m_snap if is_map else 0.0
            if penalized:
                device = idx // n_taps
                tap_sum = float(np.sum(act[device * n_taps:(device + 1) * n_taps]))
                step, tied = increment_virtual_penalty(
                    gam, gam_hat, delta, rho, n_taps, tap_sum, lo, hi, slope
                )
            elif is_map:
                step, tied = increment_virtual_relaxed_map(gam, gam_hat, delta, slope, lo, hi)
            else:
                step, tied = increment_virtual_relaxed(gam, gam_hat, delta, lo, hi), False
            ties += tied
            if step != 0.0:
                act[idx] = min(max(act[idx] + step, 0.0), 1.0)
                try:
                    sigma_inv = woodbury_update(sigma_inv, column[:, None], step * delta)
                except SingularUpdateError:
                    refresh()
                updates += 1
                if updates % config.refresh_interval == 0:
                    refresh()
        try:
            trace.append(objective())
        except ConditioningError as exc:
            exc.soft, exc.sweep = act.copy(), sweep
            raise
        if _stop(trace[-2], trace[-1], config.tol):
            break
        if penalized and config.rho_growth > 1.0:
            rho = min(rho * config.rho_growth, config.rho_max)

    drift = float(np.max(np.abs(
        sigma_inv - _inverse_of(_covariance_from_columns(columns, act * deltas, noise_var))
    )))
    soft = act if is_flat else collapse_virtual(act, n_taps)
    return DetectionOutput(kind=kind, soft=soft,
                           soft_virtual=None if is_flat else act,
                           objective_trace=np.asarray(trace), sweeps=sweeps,
                           runtime_ms=0.0, inverse_drift=drift, tie_count=ties)
