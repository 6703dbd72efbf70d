"""Path-rate scheduling constraints of a full-duplex 1-2-1 network.

A rate ``r_p`` on path ``p`` corresponds to operating ``p`` a fraction
``x_p = r_p / C_p`` of the time.  Each link ``i -> j`` of ``p`` must then be
active for ``x_p * C_p / l_ij = r_p / l_ij`` of the time, and every node can
spend at most all of its time transmitting and all of it receiving.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .simplex import simplex_max
from .topology import Network, Path, path_capacity, path_links, validate_path, validate_path_set

LP_TOL = 1e-9
ENV_TOL = 1e-12

OPTIMAL = "optimal"
DEGENERATE_OK = "degenerate_ok"
INFEASIBLE_INPUT = "infeasible_input"


class InfeasibleInputError(ValueError):
    """A positive rate was assigned to a path that cannot carry traffic."""


class BlockedLinkError(ValueError):
    """Activation fraction requested for a link with zero effective capacity."""


@dataclass
class NodeUsage:
    """Transmit and receive time fractions, indexed by node id.

    ``tx`` is meaningful for nodes ``0..N`` and ``rx`` for ``1..N+1``; the
    remaining entry of each array (destination tx, source rx) is always 0.
    """

    tx: np.ndarray
    rx: np.ndarray

    def max(self) -> float:
        return float(max(self.tx.max(initial=0.0), self.rx.max(initial=0.0)))


@dataclass
class LpSolution:
    value: float
    rates: np.ndarray
    status: str

    def format(self) -> str:
        rates = " ".join(f"{r:.17g}" for r in self.rates)
        return f"status {self.status}\nvalue {self.value:.17g}\nrates {rates}\n"


def activation_fraction(net: Network, p: Sequence[int], link: tuple[int, int]) -> float:
    """Fraction of the time ``link`` is active when ``p`` runs at full capacity."""
    p = validate_path(net, p)
    if tuple(link) not in path_links(p):
        raise ValueError(f"link {link} is not on path {p}")
    ell = net.effective_capacity()[link]
    if ell <= 0.0:
        raise BlockedLinkError(f"link {link[0]}->{link[1]} has zero effective capacity")
    return path_capacity(net, p) / ell


class ScheduleConstraints:
    """Node time-budget constraints for a fixed network state and path set.

    Rows ``0..N+1`` of :attr:`tx_coef` / :attr:`rx_coef` are nodes; columns
    are paths.  Paths containing a zero-capacity link are flagged in
    :attr:`dead` and have all-zero columns.
    """

    def __init__(self, net: Network, paths: Sequence[Sequence[int]]):
        self.paths: list[Path] = validate_path_set(net, paths)
        eff = net.effective_capacity()
        n, k = net.n_nodes, len(self.paths)
        self.tx_coef = np.zeros((n, k))
        self.rx_coef = np.zeros((n, k))
        self.path_capacity = np.zeros(k)
        self.dead = np.zeros(k, dtype=bool)
        for col, p in enumerate(self.paths):
            caps = [eff[i, j] for i, j in path_links(p)]
            self.path_capacity[col] = min(caps)
            if self.path_capacity[col] <= 0.0:
                self.dead[col] = True
                continue
            for (i, j), ell in zip(path_links(p), caps):
                self.tx_coef[i, col] += 1.0 / ell
                self.rx_coef[j, col] += 1.0 / ell
        # stacked rows: transmitters 0..N, then receivers 1..N+1
        self.matrix = np.vstack([self.tx_coef[: n - 1], self.rx_coef[1:]])

    @property
    def k(self) -> int:
        return len(self.paths)

    def usage(self, rates) -> NodeUsage:
        r = self._rates(rates)
        if np.any(r[self.dead] > 0.0):
            raise InfeasibleInputError("positive rate on a path with a zero-capacity link")
        return NodeUsage(self.tx_coef @ r, self.rx_coef @ r)

    def is_feasible(self, rates, tol: float = LP_TOL) -> bool:
        r = self._rates(rates)
        if not np.all(np.isfinite(r)) or np.any(r < -tol):
            return False
        if np.any(r[self.dead] > tol):
            return False
        return bool(np.all(self.matrix @ r <= 1.0 + tol))

    def _rates(self, rates) -> np.ndarray:
        r = np.asarray(rates, dtype=np.float64)
        if r.shape != (self.k,):
            raise ValueError(f"expected {self.k} rates, got shape {r.shape}")
        return r


def node_usage(net: Network, paths: Sequence[Sequence[int]], rates) -> NodeUsage:
    return ScheduleConstraints(net, paths).usage(rates)


def is_feasible(net: Network, paths: Sequence[Sequence[int]], rates, tol: float = LP_TOL) -> bool:
    return ScheduleConstraints(net, paths).is_feasible(rates, tol)


def restricted_capacity(net: Network, paths: Sequence[Sequence[int]]) -> LpSolution:
    """Maximum total rate over ``paths`` subject to the node time budgets.

    The optimum is often attained on a whole face of the polytope; a second
    LP picks the point of that face maximising the smallest live-path rate,
    so equivalent paths share the load instead of landing on an arbitrary
    vertex.
    """
    sc = paths if isinstance(paths, ScheduleConstraints) else ScheduleConstraints(net, paths)
    live = np.flatnonzero(~sc.dead)
    rates = np.zeros(sc.k)
    if live.size == 0:
        return LpSolution(0.0, rates, INFEASIBLE_INPUT)
    A = sc.matrix[:, live]
    m, n = A.shape
    first = simplex_max(np.ones(n), A, np.ones(m))
    x = first.x
    # balance stage over (r, t): max t  s.t.  A r <= 1,  t <= r_p,  sum r >= optimum
    A2 = np.zeros((m + n + 1, n + 1))
    A2[:m, :n] = A
    A2[m:m + n, :n] = -np.eye(n)
    A2[m:m + n, n] = 1.0
    A2[-1, :n] = -1.0
    b2 = np.concatenate([np.ones(m), np.zeros(n), [-first.value]])
    c2 = np.zeros(n + 1)
    c2[n] = 1.0
    try:
        second = simplex_max(c2, A2, b2)
        if second.x[:n].sum() >= first.value - 1e-12 * max(1.0, first.value):
            x = second.x[:n]
    except ValueError:
        pass
    rates[live] = x
    status = DEGENERATE_OK if first.degenerate else OPTIMAL
    return LpSolution(float(rates.sum()), rates, status)
