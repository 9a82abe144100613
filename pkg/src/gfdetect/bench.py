"""Monte Carlo benchmark harness.

Runs repeated detection trials with freshly drawn pilots, activities,
channels, and noise, and aggregates per-device error rates.  Every trial
derives its own random streams from the experiment seed (see
:mod:`gfdetect.streams`), so results are bit-reproducible regardless of
worker count, and threshold-calibration trials never share randomness
with evaluation trials.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .detect import ConditioningError, DetectorConfig, run_detector
from .priors import GroupPrior, IidPrior, MvbPrior, contiguous_groups
from .signal_model import (
    PilotSet,
    SystemConfig,
    draw_activities,
    draw_channel,
    generate_pilots,
    sample_covariance,
    synthesize_received,
)
from .streams import (
    NS_CALIBRATION,
    NS_EVALUATION,
    PURPOSE_ACTIVITY,
    PURPOSE_CHANNEL,
    PURPOSE_NOISE,
    PURPOSE_PILOT,
    child_seed,
    substream,
)

SWEEP_PARAMETERS = ("P", "L", "M", "q", "group_size", "detector")

# Calibration searches this threshold grid; ties resolve to the smallest.
THRESHOLD_GRID = np.round(np.arange(0, 101) / 100.0, 2)

MAX_FAILURE_FRACTION = 0.01


class ExperimentError(RuntimeError):
    """Too many detector failures, or an invalid experiment setup."""


@dataclass
class ExperimentSpec:
    """One benchmark cell: system, prior, detector, and trial bookkeeping.

    ``threshold`` is either a fixed cutoff in [0, 1] or the string
    ``"calibrate"``, which grid-searches the cutoff on independent
    calibration trials.  ``shared_pilots`` reuses a single pilot draw
    across trials instead of redrawing per trial.  ``cell`` namespaces
    the random streams of sweep cells.
    """

    system: SystemConfig
    prior: IidPrior | GroupPrior | MvbPrior
    detector: DetectorConfig
    trials: int
    seed: int
    threshold: float | str = "calibrate"
    calibration_trials: int = 50
    shared_pilots: bool = False
    cell: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if isinstance(self.threshold, str):
            if self.threshold != "calibrate":
                raise ValueError(f"threshold must be a number or 'calibrate', got {self.threshold!r}")
            if self.calibration_trials < 1:
                raise ValueError("calibration_trials must be >= 1")
        elif not 0.0 <= float(self.threshold) <= 1.0:
            raise ValueError("fixed thresholds must lie in [0, 1]")


@dataclass
class MetricRow:
    """Aggregated metrics for one benchmark cell.

    ``error_rate`` is the fraction of device-trial pairs whose detected
    activity differs from the truth; it splits exactly into the miss rate
    (active declared inactive) and false-alarm rate (inactive declared
    active) over the same denominator.  ``avg_runtime_ms`` is wall-clock
    and therefore excluded from :meth:`results_equal`.
    """

    detector: str
    n_devices: int
    n_subcarriers: int
    n_antennas: int
    n_taps: int
    q: float
    trials: int
    seed: int
    threshold: float
    error_rate: float
    miss_rate: float
    false_alarm_rate: float
    avg_sweeps: float
    avg_runtime_ms: float

    def results_equal(self, other: "MetricRow") -> bool:
        """Equality of every deterministic field (wall time excluded)."""
        for f in dataclasses.fields(self):
            if f.name == "avg_runtime_ms":
                continue
            a, b = getattr(self, f.name), getattr(other, f.name)
            if a != b and not (isinstance(a, float) and math.isnan(a) and math.isnan(b)):
                return False
        return True


def _detection_prior(spec: ExperimentSpec):
    return spec.prior if spec.detector.kind.startswith("map-") else None


def _run_one_trial(spec: ExperimentSpec, namespace: int, trial: int,
                   pilots: PilotSet | None, detector_runner):
    system, seed, cell = spec.system, spec.seed, spec.cell
    if pilots is None:
        pilots = generate_pilots(
            system, child_seed(seed, cell, namespace, trial, PURPOSE_PILOT)
        )
    activity = draw_activities(
        spec.prior, system.n_devices, substream(seed, cell, namespace, trial, PURPOSE_ACTIVITY)
    )
    channel = draw_channel(
        system, activity, substream(seed, cell, namespace, trial, PURPOSE_CHANNEL)
    )
    received = synthesize_received(
        system, pilots, channel, substream(seed, cell, namespace, trial, PURPOSE_NOISE)
    )
    cov = sample_covariance(received)
    try:
        out = detector_runner(cov, pilots, system, spec.detector, _detection_prior(spec))
    except ConditioningError:
        return trial, activity, None, 0, 0.0
    return trial, activity, out.soft, out.sweeps, out.runtime_ms


def _trial_batch(args):
    spec, namespace, trials, pilots = args
    return [_run_one_trial(spec, namespace, t, pilots, run_detector) for t in trials]


def _collect_trials(spec: ExperimentSpec, namespace: int, n_trials: int,
                    n_workers: int, detector_runner=None):
    """Run trials and return (truth, soft, sweeps, runtime, n_failed).

    Failed trials (covariance conditioning) are dropped from the arrays;
    more than ``MAX_FAILURE_FRACTION`` of them aborts the experiment.
    """
    pilots = None
    if spec.shared_pilots:
        pilots = generate_pilots(spec.system, child_seed(spec.seed, spec.cell, namespace,
                                                         0, PURPOSE_PILOT))
    if detector_runner is not None or n_workers <= 1 or n_trials == 1:
        runner = detector_runner or run_detector
        results = [_run_one_trial(spec, namespace, t, pilots, runner)
                   for t in range(n_trials)]
    else:
        chunks = np.array_split(np.arange(n_trials), min(n_workers, n_trials))
        payloads = [(spec, namespace, chunk.tolist(), pilots) for chunk in chunks if chunk.size]
        results = []
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for batch in pool.map(_trial_batch, payloads):
                results.extend(batch)
    results.sort(key=lambda item: item[0])
    kept = [r for r in results if r[2] is not None]
    n_failed = n_trials - len(kept)
    if n_failed > MAX_FAILURE_FRACTION * n_trials:
        raise ExperimentError(
            f"{n_failed} of {n_trials} trials failed detector conditioning"
        )
    truth = np.array([r[1] for r in kept], dtype=np.int8)
    soft = np.array([r[2] for r in kept])
    sweeps = np.array([r[3] for r in kept], dtype=float)
    runtime = np.array([r[4] for r in kept], dtype=float)
    return truth, soft, sweeps, runtime, n_failed


def _error_counts(truth: np.ndarray, soft: np.ndarray, theta: float):
    pred = soft > theta
    active = truth == 1
    misses = int(np.sum(active & ~pred))
    false_alarms = int(np.sum(~active & pred))
    return misses, false_alarms


def calibrate_threshold(spec: ExperimentSpec, n_workers: int = 1,
                        detector_runner=None) -> float:
    """Grid-search the error-minimizing threshold on calibration trials.

    Uses an independent random-stream namespace, so calibration never
    touches evaluation randomness.  Ties resolve to the smallest
    threshold on the grid.
    """
    truth, soft, _, _, _ = _collect_trials(
        spec, NS_CALIBRATION, spec.calibration_trials, n_workers, detector_runner
    )
    errors = [sum(_error_counts(truth, soft, theta)) for theta in THRESHOLD_GRID]
    return float(THRESHOLD_GRID[int(np.argmin(errors))])


def run_experiment(spec: ExperimentSpec, n_workers: int = 1,
                   detector_runner=None) -> MetricRow:
    """Run one benchmark cell and aggregate its error metrics.

    ``detector_runner`` substitutes the detector invocation (oracle or
    stub detectors in tests); it forces single-process execution.
    """
    if isinstance(spec.threshold, str):
        theta = calibrate_threshold(spec, n_workers, detector_runner)
    else:
        theta = float(spec.threshold)
    truth, soft, sweeps, runtime, n_failed = _collect_trials(
        spec, NS_EVALUATION, spec.trials, n_workers, detector_runner
    )
    misses, false_alarms = _error_counts(truth, soft, theta)
    denom = truth.size
    q = spec.prior.q
    return MetricRow(
        detector=spec.detector.kind,
        n_devices=spec.system.n_devices,
        n_subcarriers=spec.system.n_subcarriers,
        n_antennas=spec.system.n_antennas,
        n_taps=spec.system.n_taps,
        q=float("nan") if q is None else float(q),
        trials=spec.trials,
        seed=spec.seed,
        threshold=theta,
        error_rate=(misses + false_alarms) / denom,
        miss_rate=misses / denom,
        false_alarm_rate=false_alarms / denom,
        avg_sweeps=float(np.mean(sweeps)),
        avg_runtime_ms=float(np.mean(runtime)),
    )


def _spec_with_value(spec: ExperimentSpec, parameter: str, value, cell: int) -> ExperimentSpec:
    system, prior, detector = spec.system, spec.prior, spec.detector
    if parameter == "P":
        system = dataclasses.replace(system, n_taps=int(value))
    elif parameter == "L":
        system = dataclasses.replace(system, n_subcarriers=int(value))
    elif parameter == "M":
        system = dataclasses.replace(system, n_antennas=int(value))
    elif parameter == "q":
        if isinstance(prior, MvbPrior):
            raise ExperimentError("cannot sweep q for a general MVB prior")
        prior = dataclasses.replace(prior, q=float(value))
    elif parameter == "group_size":
        if not isinstance(prior, GroupPrior):
            raise ExperimentError("group_size sweeps require a group prior")
        prior = dataclasses.replace(
            prior, groups=contiguous_groups(system.n_devices, int(value))
        )
    elif parameter == "detector":
        detector = dataclasses.replace(detector, kind=str(value))
    else:
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    return dataclasses.replace(spec, system=system, prior=prior, detector=detector, cell=cell)


def sweep(spec: ExperimentSpec, parameter: str, values, n_workers: int = 1,
          detector_runner=None, progress=None) -> list[MetricRow]:
    """Run one benchmark cell per value of the swept parameter.

    Each cell derives its own random streams from (seed, cell index), so
    cells are independent yet individually reproducible.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {parameter!r}")
    rows = []
    for idx, value in enumerate(values):
        cell_spec = _spec_with_value(spec, parameter, value, cell=idx)
        row = run_experiment(cell_spec, n_workers, detector_runner)
        if progress is not None:
            progress(parameter, value, row)
        rows.append(row)
    return rows
