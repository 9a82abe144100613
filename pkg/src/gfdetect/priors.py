"""Activity priors for the MAP detectors.

The general model is a multivariate Bernoulli distribution whose log-pmf
is a multilinear form over device subsets,

    log p(a) = sum_w c_w * prod_{n in w} a_n - s,

with an intractable normalizer s that the detectors never need: every
MAP update consumes only the exponent and its per-coordinate derivative,
in which s cancels.

Three variants are supported.  ``IidPrior`` is independent Bernoulli(q)
per device, whose exponent is already normalized.  ``GroupPrior`` models
groups of devices that switch on and off together; its subset
coefficients concentrate mass on the all-on / all-off states of each
group, and both the exponent and the derivative collapse to O(group
size) products, so groups of any size stay cheap.  ``MvbPrior`` stores
an explicit coefficient map and is capped at 16 devices, since working
with it is exponential in the device count.

The virtual-device variants distribute each device activity across its
``n_taps`` replicas through the tap mean, so the derivative with respect
to a single replica picks up a 1 / n_taps factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MVB_MAX_DEVICES = 16


def _logit(q: float) -> float:
    return math.log(q / (1.0 - q))


def _check_q(q: float) -> None:
    if not 0.0 < q < 1.0:
        raise ValueError(f"activity probability must be strictly inside (0, 1), got {q}")


@dataclass(frozen=True)
class IidPrior:
    """Independent Bernoulli(q) activities."""

    q: float

    def __post_init__(self):
        _check_q(self.q)

    def exponent(self, activities: np.ndarray) -> float:
        n = len(activities)
        return _logit(self.q) * float(np.sum(activities)) + n * math.log(1.0 - self.q)

    def epsilon(self, index: int, activities: np.ndarray) -> float:
        return _logit(self.q)

    def exponent_virtual(self, beta: np.ndarray, n_taps: int) -> float:
        means = np.asarray(beta, dtype=float).reshape(-1, n_taps).mean(axis=1)
        return self.exponent(means)

    def epsilon_virtual(self, index: int, beta: np.ndarray, n_taps: int) -> float:
        return _logit(self.q) / n_taps


@dataclass(frozen=True)
class GroupPrior:
    """Groups of devices sharing one Bernoulli(q) activity state.

    ``epsilon`` is the leakage parameter of the multivariate-Bernoulli
    approximation: the probability mass left on states where a group is
    only partially active scales with it.
    """

    groups: tuple[tuple[int, ...], ...]
    q: float
    epsilon_leak: float

    def __post_init__(self):
        _check_q(self.q)
        if self.epsilon_leak <= 0.0:
            raise ValueError("epsilon_leak must be positive")
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        if not groups or any(len(g) == 0 for g in groups):
            raise ValueError("groups must be nonempty")
        flat = [i for g in groups for i in g]
        n = len(flat)
        if sorted(flat) != list(range(n)):
            raise ValueError("groups must partition devices 0..N-1 disjointly")
        object.__setattr__(self, "groups", groups)

    @property
    def n_devices(self) -> int:
        return sum(len(g) for g in self.groups)

    @cached_property
    def _group_of(self) -> dict[int, int]:
        return {i: k for k, g in enumerate(self.groups) for i in g}

    def _partial_coeff(self) -> float:
        # c_w for subsets strictly inside a group is (-1)^|w| times this.
        # Each partially-active group state then gets relative weight
        # epsilon_leak / (1 - q), independent of the device count.
        return math.log((1.0 - self.q) / self.epsilon_leak)

    def _full_coeff(self, size: int) -> float:
        # Coefficient of a group's full subset, chosen so that the
        # accumulated alternating partial terms cancel and the all-on
        # state keeps weight q/(1-q) relative to all-off.
        if size % 2 == 1:
            return _logit(self.q)
        return math.log(self.q * (1.0 - self.q) / self.epsilon_leak ** 2)

    def _group_exponent(self, values: np.ndarray, members: tuple[int, ...]) -> float:
        # sum over subsets w of the group: c_w prod values[w], folded into
        # two products via sum_j (-1)^j e_j = prod(1 - x).
        x = values[list(members)]
        a = self._partial_coeff()
        prod_off = float(np.prod(1.0 - x))
        prod_on = float(np.prod(x))
        sign = 1.0 if len(members) % 2 == 0 else -1.0
        return a * (prod_off - 1.0 - sign * prod_on) + self._full_coeff(len(members)) * prod_on

    def exponent(self, activities: np.ndarray) -> float:
        activities = np.asarray(activities, dtype=float)
        return sum(self._group_exponent(activities, g) for g in self.groups)

    def epsilon(self, index: int, activities: np.ndarray) -> float:
        activities = np.asarray(activities, dtype=float)
        members = self.groups[self._group_of[index]]
        others = [i for i in members if i != index]
        x = activities[others]
        a = self._partial_coeff()
        prod_off = float(np.prod(1.0 - x))
        prod_on = float(np.prod(x))
        sign = 1.0 if len(members) % 2 == 0 else -1.0
        return -a * (prod_off + sign * prod_on) + self._full_coeff(len(members)) * prod_on

    def exponent_virtual(self, beta: np.ndarray, n_taps: int) -> float:
        means = np.asarray(beta, dtype=float).reshape(-1, n_taps).mean(axis=1)
        return self.exponent(means)

    def epsilon_virtual(self, index: int, beta: np.ndarray, n_taps: int) -> float:
        means = np.asarray(beta, dtype=float).reshape(-1, n_taps).mean(axis=1)
        return self.epsilon(index // n_taps, means) / n_taps


@dataclass(frozen=True)
class MvbPrior:
    """Explicit multivariate Bernoulli coefficient map.

    ``coeffs`` maps nonempty device subsets (0-based index tuples) to
    their interaction coefficients.  Exponential in the device count, so
    restricted to at most ``MVB_MAX_DEVICES`` devices.
    """

    n_devices: int
    coeffs: tuple[tuple[tuple[int, ...], float], ...]

    def __post_init__(self):
        if self.n_devices > MVB_MAX_DEVICES:
            raise ValueError(
                f"general MVB priors are capped at {MVB_MAX_DEVICES} devices, "
                f"got {self.n_devices}"
            )
        seen = set()
        normalized = []
        for omega, c in self.coeffs:
            omega = tuple(sorted(int(i) for i in omega))
            if not omega:
                raise ValueError("subsets must be nonempty")
            if omega in seen:
                raise ValueError(f"duplicate subset {omega}")
            if omega[0] < 0 or omega[-1] >= self.n_devices:
                raise ValueError(f"subset {omega} out of range for {self.n_devices} devices")
            seen.add(omega)
            normalized.append((omega, float(c)))
        object.__setattr__(self, "coeffs", tuple(normalized))

    @property
    def q(self):
        return None

    def exponent(self, activities: np.ndarray) -> float:
        activities = np.asarray(activities, dtype=float)
        return sum(c * float(np.prod(activities[list(w)])) for w, c in self.coeffs)

    def epsilon(self, index: int, activities: np.ndarray) -> float:
        activities = np.asarray(activities, dtype=float)
        total = 0.0
        for omega, c in self.coeffs:
            if index not in omega:
                continue
            others = [i for i in omega if i != index]
            total += c * float(np.prod(activities[others]))
        return total

    def exponent_virtual(self, beta: np.ndarray, n_taps: int) -> float:
        means = np.asarray(beta, dtype=float).reshape(-1, n_taps).mean(axis=1)
        return self.exponent(means)

    def epsilon_virtual(self, index: int, beta: np.ndarray, n_taps: int) -> float:
        means = np.asarray(beta, dtype=float).reshape(-1, n_taps).mean(axis=1)
        return self.epsilon(index // n_taps, means) / n_taps


Prior = IidPrior | GroupPrior | MvbPrior


def contiguous_groups(n_devices: int, group_size: int) -> tuple[tuple[int, ...], ...]:
    """Partition devices 0..N-1 into contiguous groups of the given size.

    A final short group absorbs any remainder.
    """
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    return tuple(
        tuple(range(start, min(start + group_size, n_devices)))
        for start in range(0, n_devices, group_size)
    )


def group_coefficients(groups, q: float, epsilon_leak: float,
                       n_devices: int | None = None) -> dict[frozenset, float]:
    """Materialize the subset-coefficient map of a group prior.

    Intended for small problems (tests, exact enumeration); the group
    prior itself never expands this map.  Subsets crossing group
    boundaries carry coefficient zero and are omitted.
    """
    prior = GroupPrior(groups=tuple(tuple(g) for g in groups), q=q, epsilon_leak=epsilon_leak)
    if n_devices is not None and n_devices != prior.n_devices:
        raise ValueError("n_devices inconsistent with the partition")
    out: dict[frozenset, float] = {}
    a = prior._partial_coeff()
    for g in prior.groups:
        size = len(g)
        for mask in range(1, 1 << size):
            omega = frozenset(g[j] for j in range(size) if (mask >> j) & 1)
            if len(omega) < size:
                out[omega] = (-1.0) ** len(omega) * a
            else:
                out[omega] = prior._full_coeff(size)
    return out


def log_pmf_unnormalized(prior: Prior, activities: np.ndarray) -> float:
    """Exponent of the prior pmf (normalized only for the i.i.d. prior)."""
    return prior.exponent(activities)


def epsilon_actual(prior: Prior, index: int, activities: np.ndarray) -> float:
    """Derivative of the pmf exponent with respect to one soft activity."""
    return prior.epsilon(index, activities)


def epsilon_virtual(prior: Prior, index: int, beta: np.ndarray, n_taps: int) -> float:
    """Derivative of the tap-averaged pmf exponent for one virtual device."""
    return prior.epsilon_virtual(index, beta, n_taps)


def enumerate_log_weights(prior: Prior, n_devices: int | None = None) -> np.ndarray:
    """Exponent of every activity pattern; index bit k holds device k."""
    if n_devices is None:
        n_devices = getattr(prior, "n_devices", None)
        if n_devices is None:
            raise ValueError("n_devices is required for this prior")
    if n_devices > MVB_MAX_DEVICES:
        raise ValueError(f"enumeration is capped at {MVB_MAX_DEVICES} devices")
    weights = np.empty(1 << n_devices)
    for idx in range(weights.size):
        act = np.array([(idx >> k) & 1 for k in range(n_devices)], dtype=float)
        weights[idx] = prior.exponent(act)
    return weights


def enumerate_probabilities(prior: Prior, n_devices: int | None = None) -> np.ndarray:
    """Exact normalized pmf over all activity patterns."""
    logw = enumerate_log_weights(prior, n_devices)
    logw = logw - logw.max()
    w = np.exp(logw)
    return w / w.sum()
