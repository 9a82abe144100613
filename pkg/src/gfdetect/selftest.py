"""Fast built-in invariant checks for the ``selftest`` CLI subcommand.

Each check is a reduced-count version of an invariant from the test
suite, sized so the whole battery finishes within a couple of minutes on
a laptop.  Setting the environment variable ``GF_SELFTEST_FAIL`` to a
check name makes that check fail; this hook exists so the failure path
itself stays testable.
"""

from __future__ import annotations

import os

import numpy as np

from . import detect, linalg, priors
from .bench import ExperimentSpec, run_experiment
from .detect import DetectorConfig, run_detector
from .signal_model import (
    SystemConfig,
    draw_activities,
    draw_channel,
    generate_pilots,
    model_covariance,
    sample_covariance,
    synthesize_received,
)
from .streams import substream

FAULT_ENV = "GF_SELFTEST_FAIL"


def _instance(rng, n_devices=12, n_subcarriers=12, n_antennas=16, n_taps=2, q=0.15):
    system = SystemConfig(n_devices=n_devices, n_subcarriers=n_subcarriers,
                          n_antennas=n_antennas, n_taps=n_taps, noise_var=0.1,
                          gains=rng.uniform(0.5, 2.0, n_devices))
    seed = int(rng.integers(1 << 30))
    pilots = generate_pilots(system, seed)
    prior = priors.IidPrior(q)
    activity = draw_activities(prior, n_devices, substream(seed, 1))
    channel = draw_channel(system, activity, substream(seed, 2))
    received = synthesize_received(system, pilots, channel, substream(seed, 3))
    return system, pilots, prior, activity, sample_covariance(received)


def check_dft_unitarity():
    for n in (1, 2, 7, 16):
        f = linalg.dft_matrix(n)
        assert np.max(np.abs(f @ f.conj().T - np.eye(n))) < 1e-12


def check_eigen_reconstruction():
    rng = np.random.default_rng(0)
    for n in (2, 5, 9):
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        a = (a + a.conj().T) / 2
        values, vectors = linalg.eig_hermitian(a)
        assert np.max(np.abs(vectors @ np.diag(values) @ vectors.conj().T - a)) < 1e-10


def check_woodbury_consistency():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n, p = 6, int(rng.integers(1, 4))
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        sigma = a @ a.conj().T + n * np.eye(n)
        block = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
        scale = float(rng.uniform(-0.2, 1.0))
        updated = linalg.woodbury_update(np.linalg.inv(sigma), block, scale)
        direct = np.linalg.inv(sigma + scale * block @ block.conj().T)
        assert np.max(np.abs(updated - direct)) < 1e-9


def check_squared_factor_identity():
    rng = np.random.default_rng(2)
    for _ in range(50):
        v = rng.uniform(-2, 2, int(rng.integers(1, 6)))
        d = float(rng.uniform(-0.9, 0.9))
        got = linalg.polyval(linalg.squared_factor_coeffs(v), d)
        want = float(np.prod((1 + v * d) ** 2))
        assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def check_polynomial_roots():
    rng = np.random.default_rng(3)
    for degree in range(1, 9):
        true_roots = np.sort(rng.uniform(-1, 1, degree))
        coeffs = np.array([1.0])
        for r in true_roots:
            coeffs = np.convolve(coeffs, [-r, 1.0])
        found = linalg.real_roots_in_interval(coeffs, -1.0, 1.0)
        assert len(found) == len(np.unique(np.round(true_roots, 9)))
        assert np.max(np.abs(found - true_roots)) < 1e-7


def check_model_equivalence():
    rng = np.random.default_rng(4)
    for _ in range(10):
        system, pilots, _, activity, _ = _instance(rng)
        channel = draw_channel(system, activity, substream(9, 5))
        rng_noise = substream(9, 6)
        received = synthesize_received(system, pilots, channel, rng_noise)
        # re-derive through the per-device sum
        noise = received - pilots.stacked @ (
            (channel.virtual_activity() * np.sqrt(system.virtual_gains))[:, None]
            * channel.taps.transpose(0, 2, 1).reshape(system.n_virtual, system.n_antennas)
        )
        direct = noise.copy()
        for n in range(system.n_devices):
            direct += channel.activity[n] * np.sqrt(system.gains[n]) * (
                pilots.blocks[n] @ channel.taps[n].T
            )
        assert np.max(np.abs(direct - received)) < 1e-12


def check_covariance_consistency():
    rng = np.random.default_rng(5)
    system, pilots, _, activity, _ = _instance(rng)
    beta = np.repeat(activity.astype(float), system.n_taps)
    actual = model_covariance(pilots, system, activity.astype(float))
    virtual = model_covariance(pilots, system, beta, virtual=True)
    assert np.max(np.abs(actual - virtual)) < 1e-12


def check_derivative_finite_difference():
    rng = np.random.default_rng(6)
    step = 1e-6
    for _ in range(5):
        system, pilots, prior, _, cov = _instance(rng)
        act = rng.uniform(0.05, 0.95, system.n_devices)
        beta = rng.uniform(0.05, 0.95, system.n_virtual)
        sigma_inv = np.linalg.inv(model_covariance(pilots, system, act))
        n = int(rng.integers(system.n_devices))
        v, u = detect.coordinate_quadratic(sigma_inv, cov.matrix, pilots.blocks[n],
                                           system.gains[n])
        for slope in (0.0, 0.7):
            poly = detect.derivative_poly_actual(v, u, slope)
            d = float(rng.uniform(-0.5 * act[n], 0.5 * (1 - act[n])))
            fd = (detect.objective_actual(v, u, d + step, slope)
                  - detect.objective_actual(v, u, d - step, slope)) / (2 * step)
            analytic = linalg.polyval(poly, d) / float(np.prod((1 + v * d) ** 2))
            assert abs(analytic - fd) <= 1e-6 * max(1.0, abs(analytic), abs(fd))
        sigma_inv = np.linalg.inv(model_covariance(pilots, system, beta, virtual=True))
        i = int(rng.integers(system.n_virtual))
        gam, gam_hat = detect.rank_one_stats(sigma_inv, cov.matrix, pilots.stacked[:, i])
        delta = system.virtual_gains[i]
        taps = system.n_taps
        tap_sum = float(np.sum(beta[(i // taps) * taps:(i // taps + 1) * taps]))
        for slope in (0.0, 0.7):
            cubic = detect.penalty_cubic(gam, gam_hat, delta, 5.0, taps, tap_sum, slope)
            d = float(rng.uniform(-0.5 * beta[i], 0.5 * (1 - beta[i])))
            kw = dict(rho=5.0, n_taps=taps, tap_sum=tap_sum, prior_slope=slope)
            fd = (detect.objective_virtual(gam, gam_hat, delta, d + step, **kw)
                  - detect.objective_virtual(gam, gam_hat, delta, d - step, **kw)) / (2 * step)
            analytic = linalg.polyval(cubic, d) / (1 + d * delta * gam) ** 2
            assert abs(analytic - fd) <= 1e-6 * max(1.0, abs(analytic), abs(fd))


def check_grid_oracle():
    rng = np.random.default_rng(7)
    for _ in range(10):
        system, pilots, prior, _, cov = _instance(rng, n_taps=int(rng.integers(1, 4)))
        act = rng.uniform(0, 1, system.n_devices)
        sigma_inv = np.linalg.inv(model_covariance(pilots, system, act))
        n = int(rng.integers(system.n_devices))
        v, u = detect.coordinate_quadratic(sigma_inv, cov.matrix, pilots.blocks[n],
                                           system.gains[n])
        lo, hi = -act[n], 1 - act[n]
        d, _ = detect.increment_actual(v, u, lo, hi)
        grid = np.linspace(lo, hi, 2000)
        assert detect.objective_actual(v, u, d) <= np.min(
            detect.objective_actual(v, u, grid)) + 1e-8


def check_prior_normalization():
    rng = np.random.default_rng(8)
    coeffs = tuple(
        (tuple(sorted(rng.choice(6, size=int(rng.integers(1, 4)), replace=False).tolist())),
         float(rng.normal()))
        for _ in range(8)
    )
    dedup = {}
    for omega, c in coeffs:
        dedup[omega] = c
    prior = priors.MvbPrior(n_devices=6, coeffs=tuple(dedup.items()))
    probs = priors.enumerate_probabilities(prior)
    assert abs(probs.sum() - 1.0) < 1e-12


def check_group_prior_marginal():
    prior = priors.GroupPrior(groups=((0, 1), (2, 3, 4)), q=0.3, epsilon_leak=1e-3)
    probs = priors.enumerate_probabilities(prior, 5)
    p_active = sum(p for idx, p in enumerate(probs) if (idx >> 0) & 1 and (idx >> 1) & 1)
    assert abs(p_active - 0.3) < 0.003


def check_monotone_descent():
    rng = np.random.default_rng(9)
    system, pilots, prior, _, cov = _instance(rng)
    for kind in detect.DETECTOR_KINDS:
        p = prior if kind.startswith("map-") else None
        out = run_detector(cov, pilots, system, DetectorConfig(kind=kind), prior=p)
        assert np.all(np.diff(out.objective_trace) <= 1e-9)
        assert out.inverse_drift < 1e-8


def check_p1_collapse():
    rng = np.random.default_rng(10)
    for _ in range(2):
        system, pilots, prior, _, cov = _instance(rng, n_taps=1)
        a = run_detector(cov, pilots, system, DetectorConfig(kind="ml-act"))
        b = run_detector(cov, pilots, system, DetectorConfig(kind="ml-virt-rel"))
        assert np.max(np.abs(a.soft - b.soft)) < 1e-9


def check_determinism():
    system = SystemConfig(n_devices=12, n_subcarriers=10, n_antennas=12, n_taps=2,
                          noise_var=0.1)
    spec = ExperimentSpec(system=system, prior=priors.IidPrior(0.1),
                          detector=DetectorConfig(kind="ml-virt-rel"),
                          trials=4, seed=77, threshold=0.5)
    assert run_experiment(spec).results_equal(run_experiment(spec, n_workers=2))


CHECKS = (
    ("dft-unitarity", check_dft_unitarity),
    ("eigen-reconstruction", check_eigen_reconstruction),
    ("woodbury-consistency", check_woodbury_consistency),
    ("squared-factor-identity", check_squared_factor_identity),
    ("polynomial-roots", check_polynomial_roots),
    ("model-equivalence", check_model_equivalence),
    ("covariance-consistency", check_covariance_consistency),
    ("derivative-finite-difference", check_derivative_finite_difference),
    ("grid-oracle", check_grid_oracle),
    ("prior-normalization", check_prior_normalization),
    ("group-prior-marginal", check_group_prior_marginal),
    ("monotone-descent", check_monotone_descent),
    ("p1-collapse", check_p1_collapse),
    ("determinism", check_determinism),
)


def run_selftest(write=print) -> int:
    """Run every check, print one line each, return a process exit code."""
    injected = os.environ.get(FAULT_ENV)
    failures = 0
    for name, check in CHECKS:
        try:
            if injected == name:
                raise RuntimeError("injected fault")
            check()
        except Exception as exc:  # noqa: BLE001 - report and continue
            failures += 1
            write(f"FAIL {name}: {exc}")
        else:
            write(f"ok   {name}")
    return 0 if failures == 0 else 1
