"""Scikit-learn style estimator facade over the coordinate-descent detectors.

``ActivityDetector`` follows the fit/predict idiom: X holds one antenna
snapshot per row (shape ``(n_snapshots, n_subcarriers)``, complex), and
fitting estimates which of the configured devices were active across
those snapshots.  Parameters are plain constructor attributes, so
``get_params`` / ``set_params`` / ``clone`` and pipeline composition work
as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .detect import DETECTOR_KINDS, DetectorConfig, run_detector, threshold_activities
from .signal_model import PilotSet, SystemConfig, sample_covariance
from .validation import check_snapshot_matrix


class ActivityDetector(BaseEstimator):
    """Device-activity detector with a scikit-learn interface.

    Parameters
    ----------
    system : SystemConfig
        Dimensions and channel statistics of the access system.
    pilots : PilotSet
        The pilot sequences assigned to the devices.
    kind : str
        One of ``gfdetect.DETECTOR_KINDS``.
    prior : IidPrior | GroupPrior | MvbPrior, optional
        Activity prior; required by the ``map-*`` kinds.
    threshold : float
        Soft-activity cutoff used by :meth:`predict`.

    The remaining parameters mirror :class:`DetectorConfig`.

    Attributes (after ``fit``)
    --------------------------
    activity_ : ndarray of shape (n_devices,)
        Soft activity estimates in [0, 1].
    activity_virtual_ : ndarray or None
        Per-tap activities for the virtual-device kinds.
    objective_trace_ : ndarray
        Detector objective, one value per sweep.
    n_sweeps_ : int
    runtime_ms_ : float
    inverse_drift_ : float
        Gap between the incrementally maintained covariance inverse and a
        direct inversion at exit.
    """

    def __init__(self, system=None, pilots=None, kind="ml-act", prior=None,
                 threshold=0.5, rho=1.0, rho_growth=1.0, rho_max=1e3,
                 max_sweeps=50, tol=1e-6, refresh_interval=100,
                 coordinate_order="natural", order_seed=0):
        self.system = system
        self.pilots = pilots
        self.kind = kind
        self.prior = prior
        self.threshold = threshold
        self.rho = rho
        self.rho_growth = rho_growth
        self.rho_max = rho_max
        self.max_sweeps = max_sweeps
        self.tol = tol
        self.refresh_interval = refresh_interval
        self.coordinate_order = coordinate_order
        self.order_seed = order_seed

    def _detector_config(self) -> DetectorConfig:
        return DetectorConfig(
            kind=self.kind, rho=self.rho, rho_growth=self.rho_growth,
            rho_max=self.rho_max, max_sweeps=self.max_sweeps, tol=self.tol,
            refresh_interval=self.refresh_interval,
            coordinate_order=self.coordinate_order, order_seed=self.order_seed,
        )

    def _validate_setup(self):
        if not isinstance(self.system, SystemConfig):
            raise ValueError("system must be a SystemConfig")
        if not isinstance(self.pilots, PilotSet):
            raise ValueError("pilots must be a PilotSet")
        if self.pilots.n_devices != self.system.n_devices:
            raise ValueError("pilots and system disagree on the device count")
        if self.pilots.n_taps != self.system.n_taps:
            raise ValueError("pilots and system disagree on the tap count")
        if self.kind not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector kind {self.kind!r}")

    def _detect(self, x):
        x = check_snapshot_matrix(x, self.system.n_subcarriers)
        cov = sample_covariance(x.T)
        return run_detector(cov, self.pilots, self.system,
                            self._detector_config(), prior=self.prior)

    def fit(self, X, y=None):
        """Estimate soft device activities from the snapshots in X."""
        self._validate_setup()
        result = self._detect(X)
        self.activity_ = result.soft
        self.activity_virtual_ = result.soft_virtual
        self.objective_trace_ = result.objective_trace
        self.n_sweeps_ = result.sweeps
        self.runtime_ms_ = result.runtime_ms
        self.inverse_drift_ = result.inverse_drift
        self.n_features_in_ = X.shape[1] if hasattr(X, "shape") else self.system.n_subcarriers
        return self

    def predict(self, X=None):
        """Binary activity decisions.

        With ``X=None`` the fitted soft activities are thresholded.
        Passing fresh snapshots runs a detection on them without touching
        the fitted state.
        """
        if X is None:
            if not hasattr(self, "activity_"):
                raise NotFittedError("this ActivityDetector is not fitted yet")
            return threshold_activities(self.activity_, self.threshold)
        self._validate_setup()
        return threshold_activities(self._detect(X).soft, self.threshold)

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()

    def score(self, X, y):
        """Per-device detection accuracy against a true activity vector."""
        pred = self.predict(X)
        y = np.asarray(y).astype(np.int8)
        if y.shape != pred.shape:
            raise ValueError("y must hold one activity per device")
        return float(np.mean(pred == y))
