"""Deterministic random-stream derivation.

Every random draw in the package flows from a single 64-bit experiment
seed through a counter-based Philox generator keyed by a structured path:

    substream(seed, cell, namespace, trial, purpose)

The path components are hashed by ``numpy.random.SeedSequence``, so any
two distinct paths yield independent streams and results never depend on
execution order or worker count.  ``purpose`` separates the draws inside
one trial (pilots, activities, channel taps, noise, coordinate order);
``namespace`` keeps threshold-calibration trials disjoint from
evaluation trials; ``cell`` separates sweep cells.
"""

from __future__ import annotations

import numpy as np

PURPOSE_PILOT = 0
PURPOSE_ACTIVITY = 1
PURPOSE_CHANNEL = 2
PURPOSE_NOISE = 3
PURPOSE_ORDER = 4

NS_EVALUATION = 0
NS_CALIBRATION = 1

_MASK64 = (1 << 64) - 1


def _entropy(seed: int, path: tuple[int, ...]) -> list[int]:
    return [int(seed) & _MASK64, *(int(p) & _MASK64 for p in path)]


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent Philox generator for the given seed and path."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_entropy(seed, path))))


def child_seed(seed: int, *path: int) -> int:
    """Collapse (seed, path) into a single 64-bit seed for sub-components."""
    state = np.random.SeedSequence(_entropy(seed, path)).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
