"""Brute-force Monte Carlo oracles used by the pricing tests.

These sample the spike process terminal value directly from its definition
(Poisson number of jumps, uniform arrival times, decayed sizes) without going
through the closed-form pricing code they are used to check.
"""

import numpy as np

from spikelab.model import SpikeParams


def spike_terminal_samples(
    params: SpikeParams, horizon: float, n_paths: int, seed: int
) -> np.ndarray:
    """Samples of Z_horizon started from Z_0 = 0, one per path."""
    rng = np.random.default_rng(seed)
    counts = rng.poisson(params.intensity * horizon, n_paths)
    total = int(counts.sum())
    path_idx = np.repeat(np.arange(n_paths), counts)
    times = rng.uniform(0.0, horizon, total)
    sizes = params.law.sample(rng, total) if total else np.empty(0)
    contrib = sizes * np.exp(-params.reversion * (horizon - times))
    return np.bincount(path_idx, weights=contrib, minlength=n_paths)


def mc_mean_with_se(samples: np.ndarray):
    return samples.mean(), samples.std(ddof=1) / np.sqrt(samples.size)
