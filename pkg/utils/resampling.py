"""Mass-proportional resampling of atomic measures."""

from typing import Tuple

import numpy as np


def systematic_resample(masses: np.ndarray, count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pick at most ``count`` atoms with probability proportional to mass.

    Systematic resampling: one uniform offset, ``count`` equally spaced
    pointers into the cumulative mass. Returns the selected atom indices
    (unique, sorted) and their new masses, which sum to the original total.
    """
    masses = np.asarray(masses, dtype=float)
    total = float(masses.sum())
    if total <= 0:
        raise ValueError("cannot resample a measure with no mass")
    if masses.size <= count:
        idx = np.nonzero(masses > 0)[0]
        return idx, masses[idx]

    rng = np.random.default_rng(seed)
    pointers = (rng.uniform(0.0, 1.0) + np.arange(count)) / count
    cumulative = np.cumsum(masses) / total
    cumulative[-1] = 1.0
    picks = np.searchsorted(cumulative, pointers, side="right")
    idx, hits = np.unique(picks, return_counts=True)
    return idx, hits * (total / count)
