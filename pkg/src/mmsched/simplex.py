"""Dense tableau simplex for ``max c @ x  s.t.  A @ x <= b, x >= 0``.

Rows with ``b >= 0`` start from their slack; rows with ``b < 0`` are negated
and get an artificial variable, removed by a first phase that minimises the
artificials' sum.  Pivot selection follows Bland's rule (lowest index
enters, lowest basic index leaves on ratio ties), which rules out cycling
and makes results deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-12
PHASE1_TOL = 1e-9


class UnboundedError(ValueError):
    pass


class InfeasibleError(ValueError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    value: float
    iterations: int
    degenerate: bool


def _pivot_loop(T: np.ndarray, basis: list[int], n_cols: int, max_iter: int) -> tuple[int, bool]:
    """Optimise the tableau whose last row is the (negated) objective.

    Only the first ``n_cols`` columns may enter the basis.
    """
    m = T.shape[0] - 1
    degenerate = False
    for it in range(max_iter):
        entering = np.flatnonzero(T[m, :n_cols] < -EPS)
        if entering.size == 0:
            return it, degenerate
        col = int(entering[0])
        column = T[:m, col]
        rows = np.flatnonzero(column > EPS)
        if rows.size == 0:
            raise UnboundedError("objective is unbounded")
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + EPS * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        if best <= EPS:
            degenerate = True
        T[row] /= T[row, col]
        for r in range(m + 1):
            if r != row and T[r, col] != 0.0:
                T[r] -= T[r, col] * T[row]
        basis[row] = col
    raise RuntimeError(f"simplex did not converge in {max_iter} iterations")


def simplex_max(c, A, b, max_iter: int = 10_000) -> SimplexResult:
    c = np.asarray(c, dtype=np.float64)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("shape mismatch between c, A and b")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
        raise ValueError("non-finite LP data")

    neg = np.flatnonzero(b < 0)
    n_art = neg.size
    width = n + m + n_art
    # columns: x (n) | slacks (m) | artificials (n_art) | rhs
    T = np.zeros((m + 1, width + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[neg] *= -1.0
    basis = list(range(n, n + m))
    for a, r in enumerate(neg):
        T[r, n + m + a] = 1.0
        basis[r] = n + m + a
    iterations = 0
    degenerate = False

    if n_art:
        # phase 1: maximise -sum(artificials), written in reduced form
        T[m, :] = -T[neg].sum(axis=0)
        T[m, n + m:width] = 0.0
        it, degenerate = _pivot_loop(T, basis, width, max_iter)
        iterations += it
        if -T[m, -1] > PHASE1_TOL * max(1.0, np.abs(b).max()):
            raise InfeasibleError("constraints admit no nonnegative solution")
        # drive any artificial still basic (at zero) out of the basis
        for r in range(m):
            if basis[r] >= n + m:
                cand = np.flatnonzero(np.abs(T[r, :n + m]) > EPS)
                if cand.size:
                    col = int(cand[0])
                    T[r] /= T[r, col]
                    for rr in range(m + 1):
                        if rr != r and T[rr, col] != 0.0:
                            T[rr] -= T[rr, col] * T[r]
                    basis[r] = col
        T[:, n + m:width] = 0.0

    T[m, :] = 0.0
    T[m, :n] = -c
    for r, v in enumerate(basis):
        if v < n and c[v] != 0.0:
            T[m] += c[v] * T[r]
    it, deg2 = _pivot_loop(T, basis, n + m, max_iter)
    iterations += it

    x = np.zeros(width)
    for r, v in enumerate(basis):
        x[v] = T[r, -1]
    x = np.maximum(x[:n], 0.0)
    return SimplexResult(x=x, value=float(c @ x), iterations=iterations, degenerate=degenerate or deg2)
