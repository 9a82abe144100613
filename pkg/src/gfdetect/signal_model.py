"""Generative OFDM signal model.

Pilots, effective pilot matrices, activity and channel realizations, the
received pilot signal, and the sample covariance that is the sufficient
statistic for every detector.

The received signal is generated directly in its effective-pilot form
(one L x P block per device), which is algebraically identical to pushing
the time-domain pilot through the circulant channel matrix but costs
O(L*P) per device instead of O(L^2).  Stacking the per-device blocks
gives the equivalent flat-fading model for N*P single-tap virtual
devices, where virtual device (n-1)P + p carries tap p of device n and
inherits the device's activity state and large-scale gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import priors
from .linalg import dft_matrix, hermitize
from .streams import PURPOSE_PILOT, substream


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SystemConfig:
    """Static system dimensions and channel statistics.

    gains holds the per-device large-scale fading powers (linear scale);
    it defaults to all ones.  The tap count must be strictly smaller than
    the subcarrier count.
    """

    n_devices: int
    n_subcarriers: int
    n_antennas: int
    n_taps: int
    noise_var: float
    gains: np.ndarray | None = None

    def __post_init__(self):
        for name in ("n_devices", "n_subcarriers", "n_antennas", "n_taps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_taps >= self.n_subcarriers:
            raise ValueError(
                f"n_taps ({self.n_taps}) must be < n_subcarriers ({self.n_subcarriers})"
            )
        if not self.noise_var > 0.0:
            raise ValueError("noise_var must be positive")
        gains = self.gains
        if gains is None:
            gains = np.ones(self.n_devices)
        gains = np.asarray(gains, dtype=float)
        if gains.shape != (self.n_devices,):
            raise ValueError(f"gains must have shape ({self.n_devices},)")
        if np.any(gains <= 0.0):
            raise ValueError("gains must be positive")
        object.__setattr__(self, "gains", _readonly(gains))

    @property
    def n_virtual(self) -> int:
        return self.n_devices * self.n_taps

    @property
    def virtual_gains(self) -> np.ndarray:
        """Per-virtual-device gains: each device's gain repeated per tap."""
        return np.repeat(self.gains, self.n_taps)


@dataclass(frozen=True)
class PilotSet:
    """Frequency-domain pilots and their effective pilot matrices.

    frequency: L x N pilot columns, each of norm sqrt(L).
    blocks:    N x L x P effective pilot matrices (IDFT-domain blocks).
    stacked:   L x N*P concatenation of the blocks, the virtual-device
               signature matrix.
    """

    frequency: np.ndarray
    blocks: np.ndarray
    stacked: np.ndarray

    def __post_init__(self):
        for name in ("frequency", "blocks", "stacked"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def n_subcarriers(self) -> int:
        return self.frequency.shape[0]

    @property
    def n_devices(self) -> int:
        return self.frequency.shape[1]

    @property
    def n_taps(self) -> int:
        return self.blocks.shape[2]


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of device activities and channel taps.

    taps[n, m, p] is the p-th impulse-response coefficient between device
    n and antenna m, i.i.d. standard complex Gaussian under the Rayleigh
    model.  The virtual activity vector replicates each device's state
    across its taps.
    """

    activity: np.ndarray        # (N,) in {0, 1}
    taps: np.ndarray            # (N, M, P) complex

    def __post_init__(self):
        object.__setattr__(self, "activity", _readonly(np.asarray(self.activity, dtype=np.int8)))
        object.__setattr__(self, "taps", _readonly(np.asarray(self.taps, dtype=complex)))

    def virtual_activity(self) -> np.ndarray:
        return np.repeat(self.activity, self.taps.shape[2])


@dataclass(frozen=True)
class SampleCovariance:
    """Sample covariance of the antenna snapshots: (1/M) R R^H."""

    matrix: np.ndarray
    n_snapshots: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix))


def effective_pilot(freq_pilot: np.ndarray, n_taps: int) -> np.ndarray:
    """First ``n_taps`` columns of F^H diag(pilot) F for one pilot column."""
    freq_pilot = np.asarray(freq_pilot, dtype=complex)
    n = freq_pilot.shape[0]
    if n_taps >= n:
        raise ValueError(f"n_taps ({n_taps}) must be < pilot length ({n})")
    f = dft_matrix(n)
    return f.conj().T @ (freq_pilot[:, None] * f[:, :n_taps])


def build_pilot_set(frequency: np.ndarray, n_taps: int) -> PilotSet:
    """Assemble a PilotSet from an L x N frequency-pilot matrix."""
    frequency = np.asarray(frequency, dtype=complex)
    n_sub, n_dev = frequency.shape
    if n_taps >= n_sub:
        raise ValueError(f"n_taps ({n_taps}) must be < n_subcarriers ({n_sub})")
    f = dft_matrix(n_sub)
    # blocks[n] = F^H (diag(pilot_n) F[:, :P]), batched over devices
    scaled = frequency.T[:, :, None] * f[None, :, :n_taps]          # (N, L, P)
    blocks = np.einsum("kl,nlp->nkp", f.conj().T, scaled)
    stacked = blocks.transpose(1, 0, 2).reshape(n_sub, n_dev * n_taps)
    return PilotSet(frequency=frequency, blocks=blocks, stacked=stacked)


def generate_pilots(system: SystemConfig, seed: int) -> PilotSet:
    """Draw i.i.d. complex-Gaussian pilots and normalize each to norm sqrt(L).

    Deterministic for a given seed: the same (system, seed) pair always
    yields a bit-identical pilot set.
    """
    rng = substream(seed, PURPOSE_PILOT)
    n_sub, n_dev = system.n_subcarriers, system.n_devices
    raw = rng.standard_normal((n_sub, n_dev)) + 1j * rng.standard_normal((n_sub, n_dev))
    norms = np.linalg.norm(raw, axis=0)
    frequency = raw * (np.sqrt(n_sub) / norms)
    return build_pilot_set(frequency, system.n_taps)


def draw_activities(prior, n_devices: int, rng: np.random.Generator) -> np.ndarray:
    """Sample a binary activity vector from the given prior.

    The i.i.d. and group priors sample directly; a general multivariate
    Bernoulli prior is sampled exactly by enumerating all activity
    patterns, which is only supported for small device counts.
    """
    if isinstance(prior, priors.IidPrior):
        return (rng.random(n_devices) < prior.q).astype(np.int8)
    if isinstance(prior, priors.GroupPrior):
        if prior.n_devices != n_devices:
            raise ValueError("group prior covers a different device count")
        act = np.zeros(n_devices, dtype=np.int8)
        group_on = rng.random(len(prior.groups)) < prior.q
        for members, on in zip(prior.groups, group_on):
            if on:
                act[list(members)] = 1
        return act
    if isinstance(prior, priors.MvbPrior):
        if n_devices != prior.n_devices:
            raise ValueError("MVB prior covers a different device count")
        probs = priors.enumerate_probabilities(prior)
        idx = int(rng.choice(probs.size, p=probs))
        return np.array([(idx >> k) & 1 for k in range(n_devices)], dtype=np.int8)
    raise TypeError(f"unsupported prior type {type(prior).__name__}")


def draw_channel(system: SystemConfig, activity: np.ndarray,
                 rng: np.random.Generator) -> ChannelRealization:
    """Draw Rayleigh taps CN(0,1) for every device, antenna, and tap."""
    shape = (system.n_devices, system.n_antennas, system.n_taps)
    taps = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return ChannelRealization(activity=activity, taps=taps)


def synthesize_received(system: SystemConfig, pilots: PilotSet,
                        realization: ChannelRealization,
                        rng: np.random.Generator) -> np.ndarray:
    """Received pilot signal R (L x M) plus white noise CN(0, noise_var I).

    Column m is sum_n activity_n sqrt(gain_n) S_n taps[n, m], computed in
    the stacked virtual-device form, which is exactly the same sum.
    """
    n_sub, n_ant = system.n_subcarriers, system.n_antennas
    weights = realization.virtual_activity() * np.sqrt(system.virtual_gains)
    taps_flat = realization.taps.transpose(0, 2, 1).reshape(system.n_virtual, n_ant)
    noise = (rng.standard_normal((n_sub, n_ant)) + 1j * rng.standard_normal((n_sub, n_ant)))
    noise *= np.sqrt(system.noise_var / 2.0)
    return pilots.stacked @ (weights[:, None] * taps_flat) + noise


def sample_covariance(received: np.ndarray) -> SampleCovariance:
    """Average outer product of the antenna snapshots, re-Hermitized."""
    received = np.asarray(received, dtype=complex)
    if received.ndim != 2:
        raise ValueError("received signal must be a 2-D (L x M) array")
    m = received.shape[1]
    if m < 1:
        raise ValueError("need at least one antenna snapshot")
    return SampleCovariance(matrix=hermitize(received @ received.conj().T) / m, n_snapshots=m)


def model_covariance(pilots: PilotSet, system: SystemConfig,
                     activities: np.ndarray, virtual: bool = False) -> np.ndarray:
    """Model covariance implied by soft activities.

    Actual-device form: sum_n a_n gain_n S_n S_n^H + noise_var I.
    Virtual-device form: the same with independent per-tap activities.
    The two agree exactly whenever the virtual activities are the
    replicated device activities.
    """
    activities = np.asarray(activities, dtype=float)
    if virtual:
        if activities.shape != (system.n_virtual,):
            raise ValueError("virtual activities must have length N*P")
        weights = activities * system.virtual_gains
    else:
        if activities.shape != (system.n_devices,):
            raise ValueError("activities must have length N")
        weights = np.repeat(activities * system.gains, system.n_taps)
    s = pilots.stacked
    cov = (s * weights) @ s.conj().T
    cov.flat[:: cov.shape[0] + 1] += system.noise_var
    return hermitize(cov)


def save_pilots(path, pilots: PilotSet) -> None:
    """Write pilots as text, one line per entry: ``n l re im`` (1-based)."""
    freq = pilots.frequency
    with open(path, "w", encoding="ascii") as fh:
        for n in range(freq.shape[1]):
            for l in range(freq.shape[0]):
                z = freq[l, n]
                fh.write(f"{n + 1} {l + 1} {float(z.real)!r} {float(z.imag)!r}\n")


def load_pilots(path, n_taps: int) -> PilotSet:
    """Read pilots from the textual ``n l re im`` format."""
    entries = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'n l re im', got {line!r}")
            n, l = int(parts[0]), int(parts[1])
            entries.append((n - 1, l - 1, float(parts[2]) + 1j * float(parts[3])))
    if not entries:
        raise ValueError(f"{path}: no pilot entries")
    n_dev = max(e[0] for e in entries) + 1
    n_sub = max(e[1] for e in entries) + 1
    frequency = np.zeros((n_sub, n_dev), dtype=complex)
    for n, l, z in entries:
        frequency[l, n] = z
    return build_pilot_set(frequency, n_taps)
