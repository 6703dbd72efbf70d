"""Gaussian 1-2-1 network model: link capacities, lengths, blockage and paths.

Node 0 is the source and node ``n_relays + 1`` the destination.  A directed
link ``i -> j`` may exist for ``i in [0, N]`` and ``j in [1, N + 1]`` with
``i != j``; nothing enters the source and nothing leaves the destination.
"""

from __future__ import annotations

import heapq
import io
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

Path = tuple[int, ...]

NETWORK_FILE_HEADER = "# mmsched-network v1"


def _check_interval(name: str, interval: Sequence[float]) -> tuple[float, float]:
    lo, hi = float(interval[0]), float(interval[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ValueError(f"{name} must be a finite interval with lower <= upper, got {interval!r}")
    return lo, hi


def admissible_mask(n_relays: int) -> np.ndarray:
    """Boolean (N+2, N+2) mask of ordered pairs that may carry a link."""
    n = n_relays + 2
    mask = np.ones((n, n), dtype=bool)
    np.fill_diagonal(mask, False)
    mask[:, 0] = False
    mask[n - 1, :] = False
    return mask


@dataclass
class Network:
    """Directed link capacities plus symmetric lengths and blockage flags.

    ``capacity[i, j]`` is the base capacity of link ``i -> j`` (0 where
    ``present[i, j]`` is false).  ``weight`` and ``blocked`` are symmetric
    per node pair.
    """

    n_relays: int
    capacity: np.ndarray
    weight: np.ndarray
    blocked: np.ndarray = field(default=None)  # type: ignore[assignment]
    present: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        n = self.n_relays + 2
        self.capacity = np.array(self.capacity, dtype=np.float64)
        self.weight = np.array(self.weight, dtype=np.float64)
        if self.blocked is None:
            self.blocked = np.zeros((n, n), dtype=bool)
        if self.present is None:
            self.present = admissible_mask(self.n_relays)
        self.blocked = np.array(self.blocked, dtype=bool)
        self.present = np.array(self.present, dtype=bool)
        for name in ("capacity", "weight", "blocked", "present"):
            if getattr(self, name).shape != (n, n):
                raise ValueError(f"{name} must have shape {(n, n)}")
        if np.any(self.present & ~admissible_mask(self.n_relays)):
            raise ValueError("links into the source, out of the destination or self-links are not allowed")
        if np.any(self.capacity[self.present] < 0):
            raise ValueError("link capacities must be nonnegative")
        self.capacity[~self.present] = 0.0

    @property
    def source(self) -> int:
        return 0

    @property
    def destination(self) -> int:
        return self.n_relays + 1

    @property
    def n_nodes(self) -> int:
        return self.n_relays + 2

    def effective_capacity(self) -> np.ndarray:
        """Capacities with blocked links zeroed; base capacities are kept."""
        return np.where(self.blocked, 0.0, self.capacity)

    def has_link(self, i: int, j: int) -> bool:
        n = self.n_nodes
        return 0 <= i < n and 0 <= j < n and bool(self.present[i, j])

    def links(self) -> Iterator[tuple[int, int]]:
        for i, j in zip(*np.nonzero(self.present)):
            yield int(i), int(j)

    def copy(self) -> "Network":
        return Network(
            self.n_relays,
            self.capacity.copy(),
            self.weight.copy(),
            self.blocked.copy(),
            self.present.copy(),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.n_relays == other.n_relays
            and np.array_equal(self.capacity, other.capacity)
            and np.array_equal(self.weight, other.weight)
            and np.array_equal(self.blocked, other.blocked)
            and np.array_equal(self.present, other.present)
        )


def generate_network(
    n_relays: int,
    cap_range: Sequence[float] = (0.0, 10.0),
    weight_range: Sequence[float] = (0.0, 250.0),
    fully_connected: bool = True,
    seed: int | np.random.Generator = 0,
    link_prob: float = 0.5,
) -> Network:
    """Draw a random network.

    Every admissible ordered pair gets an independent uniform capacity and
    every unordered pair one uniform weight shared by both directions.  When
    ``fully_connected`` is false each unordered pair is kept with probability
    ``link_prob`` (both directions together).
    """
    if n_relays < 0:
        raise ValueError("n_relays must be >= 0")
    c_lo, c_hi = _check_interval("cap_range", cap_range)
    w_lo, w_hi = _check_interval("weight_range", weight_range)
    if c_lo < 0 or w_lo < 0:
        raise ValueError("capacity and weight ranges must have nonnegative lower bounds")
    rng = np.random.default_rng(seed)
    n = n_relays + 2
    capacity = rng.uniform(c_lo, c_hi, size=(n, n))
    upper = rng.uniform(w_lo, w_hi, size=(n, n))
    weight = np.triu(upper, 1)
    weight = weight + weight.T
    present = admissible_mask(n_relays)
    if not fully_connected:
        keep = np.triu(rng.random((n, n)) < link_prob, 1)
        keep = keep | keep.T
        present &= keep
    capacity[~present] = 0.0
    weight[~(present | present.T)] = 0.0
    return Network(n_relays, capacity, weight, present=present)


def validate_path(net: Network, p: Sequence[int]) -> Path:
    p = tuple(int(v) for v in p)
    if len(p) < 2 or p[0] != net.source or p[-1] != net.destination:
        raise ValueError(f"path {p} must run from {net.source} to {net.destination}")
    if len(set(p)) != len(p):
        raise ValueError(f"path {p} repeats a node")
    for i, j in zip(p[:-1], p[1:]):
        if not net.has_link(i, j):
            raise ValueError(f"path {p} uses missing link {i}->{j}")
    return p


def validate_path_set(net: Network, paths: Sequence[Sequence[int]]) -> list[Path]:
    out = [validate_path(net, p) for p in paths]
    if not out:
        raise ValueError("path set is empty")
    if len(set(out)) != len(out):
        raise ValueError("path set contains duplicate paths")
    return out


def path_links(p: Sequence[int]) -> list[tuple[int, int]]:
    return list(zip(p[:-1], p[1:]))


def path_capacity(net: Network, p: Sequence[int]) -> float:
    """Minimum effective link capacity along ``p`` (0 if any link is blocked)."""
    p = validate_path(net, p)
    eff = net.effective_capacity()
    return float(min(eff[i, j] for i, j in path_links(p)))


def path_length(net: Network, p: Sequence[int]) -> float:
    return float(sum(net.weight[i, j] for i, j in path_links(p)))


def path_is_blocked(net: Network, p: Sequence[int]) -> bool:
    return any(net.blocked[i, j] for i, j in path_links(p))


def step_capacities(
    net: Network,
    delta_range: Sequence[float],
    clamp: Sequence[float],
    rng: np.random.Generator,
) -> Network:
    """Add an independent uniform drift to every link capacity, then clamp."""
    d_lo, d_hi = _check_interval("delta_range", delta_range)
    c_lo, c_hi = _check_interval("clamp", clamp)
    delta = rng.uniform(d_lo, d_hi, size=net.capacity.shape)
    drifted = np.clip(net.capacity + delta, c_lo, c_hi)
    net.capacity = np.where(net.present, drifted, 0.0)
    return net


def blockage_probability(weight: np.ndarray | float, lam: float) -> np.ndarray | float:
    return -np.expm1(-lam * np.asarray(weight, dtype=np.float64))


def resample_blockage(net: Network, lam: float, rng: np.random.Generator) -> Network:
    """Clear all blockage, then block each node pair with prob. 1 - exp(-lam * w)."""
    if lam < 0:
        raise ValueError("blocker density lambda must be nonnegative")
    n = net.n_nodes
    draws = rng.random((n, n))
    hit = np.triu(draws < blockage_probability(net.weight, lam), 1)
    hit &= net.present | net.present.T
    net.blocked = hit | hit.T
    return net


def widest_path(eff: np.ndarray, present: np.ndarray, source: int, dest: int) -> tuple[Path | None, float]:
    """Maximum-bottleneck path by a Dijkstra variant.

    Ties on width are resolved toward the lowest node index, both in the
    order nodes are settled and in the predecessor kept for each node.
    """
    n = eff.shape[0]
    width = np.full(n, -np.inf)
    width[source] = np.inf
    pred = [-1] * n
    done = np.zeros(n, dtype=bool)
    heap = [(-np.inf, source)]
    while heap:
        neg_w, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == dest:
            break
        for v in np.flatnonzero(present[u]):
            v = int(v)
            if done[v]:
                continue
            cand = min(-neg_w, eff[u, v])
            if cand > width[v] or (cand == width[v] and u < pred[v]):
                width[v] = cand
                pred[v] = u
                heapq.heappush(heap, (-cand, v))
    if not done[dest]:
        return None, 0.0
    nodes = [dest]
    while nodes[-1] != source:
        nodes.append(pred[nodes[-1]])
    return tuple(reversed(nodes)), float(width[dest])


def _loop_erased_walk(present: np.ndarray, source: int, dest: int, rng: np.random.Generator, max_len: int) -> Path | None:
    walk = [source]
    where = {source: 0}
    for _ in range(max_len):
        nbrs = np.flatnonzero(present[walk[-1]])
        if nbrs.size == 0:
            return None
        nxt = int(nbrs[rng.integers(nbrs.size)])
        if nxt in where:
            cut = where[nxt]
            for v in walk[cut + 1:]:
                del where[v]
            del walk[cut + 1:]
        else:
            where[nxt] = len(walk)
            walk.append(nxt)
        if nxt == dest:
            return tuple(walk)
    return None


def select_paths(
    net: Network,
    k: int,
    n_widest: int,
    rng: np.random.Generator,
    max_tries: int | None = None,
) -> list[Path]:
    """Pick ``k`` distinct simple paths: ``n_widest`` widest ones, the rest random.

    The widest paths come from repeated bottleneck searches, each removing the
    bottleneck link of the previously found path.  The remaining paths are
    loop-erased random walks from the source, rejected if already chosen.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0 <= n_widest <= k:
        raise ValueError("n_widest must lie in [0, k]")
    src, dst = net.source, net.destination
    eff = net.effective_capacity()
    present = net.present.copy()
    chosen: list[Path] = []
    for _ in range(n_widest):
        p, _ = widest_path(eff, present, src, dst)
        if p is None:
            break
        chosen.append(p)
        links = path_links(p)
        i, j = min(links, key=lambda ij: (eff[ij], ij))
        present[i, j] = False
    if len(chosen) < n_widest:
        raise ValueError(f"only {len(chosen)} widest paths exist, {n_widest} requested")

    budget = max_tries if max_tries is not None else 200 * k + 1000
    seen = set(chosen)
    tries = 0
    while len(chosen) < k and tries < budget:
        tries += 1
        p = _loop_erased_walk(net.present, src, dst, rng, max_len=50 * net.n_nodes)
        if p is not None and p not in seen:
            seen.add(p)
            chosen.append(p)
    if len(chosen) < k:
        raise ValueError(
            f"could not find {k} distinct simple paths after {budget} random-walk attempts "
            f"(found {len(chosen)}); the network may not contain that many"
        )
    return chosen


def enumerate_simple_paths(net: Network, max_paths: int | None = None) -> list[Path]:
    """All simple source-destination paths, in lexicographic order."""
    src, dst = net.source, net.destination
    out: list[Path] = []
    stack = [(src,)]
    while stack:
        p = stack.pop()
        u = p[-1]
        if u == dst:
            out.append(p)
            if max_paths is not None and len(out) > max_paths:
                raise ValueError(f"more than {max_paths} simple paths")
            continue
        for v in sorted(np.flatnonzero(net.present[u]), reverse=True):
            if int(v) not in p:
                stack.append(p + (int(v),))
    return sorted(out)


def write_network(net: Network, path: str | os.PathLike | io.TextIOBase) -> None:
    lines = [NETWORK_FILE_HEADER, f"n_relays {net.n_relays}", "# from to base_capacity weight blocked"]
    for i, j in net.links():
        lines.append(
            f"{i} {j} {net.capacity[i, j]:.17g} {net.weight[i, j]:.17g} {int(net.blocked[i, j])}"
        )
    text = "\n".join(lines) + "\n"
    if isinstance(path, io.TextIOBase):
        path.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def read_network(path: str | os.PathLike | io.TextIOBase) -> Network:
    if isinstance(path, io.TextIOBase):
        text = path.read()
    else:
        with open(path) as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0].strip() != NETWORK_FILE_HEADER:
        raise ValueError(f"not a network file (expected header {NETWORK_FILE_HEADER!r})")
    body = [ln.split() for ln in lines[1:] if ln.strip() and not ln.startswith("#")]
    if not body or body[0][0] != "n_relays":
        raise ValueError("network file is missing the n_relays record")
    n_relays = int(body[0][1])
    n = n_relays + 2
    capacity = np.zeros((n, n))
    weight = np.zeros((n, n))
    blocked = np.zeros((n, n), dtype=bool)
    present = np.zeros((n, n), dtype=bool)
    for rec in body[1:]:
        if len(rec) != 5:
            raise ValueError(f"malformed link record: {' '.join(rec)}")
        i, j = int(rec[0]), int(rec[1])
        capacity[i, j] = float(rec[2])
        weight[i, j] = float(rec[3])
        blocked[i, j] = bool(int(rec[4]))
        present[i, j] = True
    # pairs present in only one direction still carry a symmetric weight
    weight = np.where(present | ~present.T, weight, weight.T)
    blocked = blocked | blocked.T
    return Network(n_relays, capacity, weight, blocked, present)
