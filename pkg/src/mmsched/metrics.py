"""Per-episode performance metrics."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .topology import Network, path_is_blocked


def average_training_rate(step_rates: Sequence[float], horizon: int) -> float:
    """Mean sum rate over ``horizon`` steps, holding the last rate after an early stop."""
    rates = np.asarray(step_rates, dtype=np.float64)
    if rates.size == 0:
        raise ValueError("empty rate trace")
    if rates.size > horizon:
        raise ValueError(f"trace has {rates.size} steps, more than the horizon {horizon}")
    return float((rates.sum() + (horizon - rates.size) * rates[-1]) / horizon)


def count_blocked_paths(net: Network, paths: Sequence[Sequence[int]]) -> int:
    return sum(path_is_blocked(net, p) for p in paths)
