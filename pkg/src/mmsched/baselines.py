"""Capacity-oblivious comparison schedulers: equal time sharing and shortest paths."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .topology import Network, path_capacity, path_length, validate_path_set


@dataclass
class BaselineSchedule:
    rates: np.ndarray
    active_paths: list[int]
    time_fractions: np.ndarray

    @property
    def sum_rate(self) -> float:
        return float(self.rates.sum())


def _schedule(net: Network, paths, fractions: np.ndarray) -> BaselineSchedule:
    caps = np.array([path_capacity(net, p) for p in paths])
    active = [int(i) for i in np.flatnonzero(fractions > 0)]
    return BaselineSchedule(fractions * caps, active, fractions)


def es_rates(net: Network, paths: Sequence[Sequence[int]]) -> BaselineSchedule:
    """Equal time sharing: every path runs 1/k of the time at its capacity."""
    paths = validate_path_set(net, paths)
    k = len(paths)
    return _schedule(net, paths, np.full(k, 1.0 / k))


def sp_rates(net: Network, paths: Sequence[Sequence[int]]) -> BaselineSchedule:
    """Half the time on each of the two shortest paths (by summed link weight).

    A blocked path in the pair keeps its half of the time and carries nothing.
    """
    paths = validate_path_set(net, paths)
    if len(paths) < 2:
        raise ValueError("shortest-path baseline needs at least two paths")
    lengths = [path_length(net, p) for p in paths]
    order = sorted(range(len(paths)), key=lambda i: (lengths[i], i))
    fractions = np.zeros(len(paths))
    fractions[order[:2]] = 0.5
    return _schedule(net, paths, fractions)
