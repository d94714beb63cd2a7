"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Solves ``min c'x  s.t.  A x <= b, x >= 0`` for modest problem sizes
(a few thousand columns at most).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, ShapeMismatch, SolverStall

__all__ = ["LPResult", "linprog_bland"]


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    fun: float
    iterations: int
    basis: np.ndarray


def _pivot(t: np.ndarray, row: int, col: int) -> None:
    t[row] /= t[row, col]
    colv = t[:, col].copy()
    colv[row] = 0.0
    t -= np.outer(colv, t[row])


def _run(t: np.ndarray, basis: np.ndarray, allowed: int, max_iters: int,
         used: int, eps: float) -> int:
    """Bland-rule pivots on tableau ``t`` whose last row holds reduced costs
    and last column the right-hand side. Only the first ``allowed`` columns
    may enter. Returns the updated iteration count."""
    m = t.shape[0] - 1
    while True:
        red = t[-1, :allowed]
        cand = np.flatnonzero(red < -eps)
        if cand.size == 0:
            return used
        if used >= max_iters:
            raise SolverStall(f"simplex iteration cap {max_iters} reached")
        col = int(cand[0])
        colv = t[:m, col]
        pos = np.flatnonzero(colv > eps)
        if pos.size == 0:
            # unbounded direction; callers only pose bounded problems
            raise SolverStall("LP is unbounded")
        ratios = t[pos, -1] / colv[pos]
        best = ratios.min()
        ties = pos[ratios <= best + eps * max(1.0, abs(best))]
        row = int(ties[np.argmin(basis[ties])])
        _pivot(t, row, col)
        basis[row] = col
        used += 1


def linprog_bland(c, a_ub, b_ub, max_iters: int | None = None,
                  eps: float = 1e-10) -> LPResult:
    """Minimize ``c @ x`` subject to ``a_ub @ x <= b_ub`` and ``x >= 0``.

    Raises :class:`Infeasible` when phase one cannot drive the artificial
    variables to zero and :class:`SolverStall` at the iteration cap.
    """
    c = np.asarray(c, dtype=float).ravel()
    a = np.asarray(a_ub, dtype=float)
    b = np.asarray(b_ub, dtype=float).ravel()
    m, n = a.shape
    if c.size != n or b.size != m:
        raise ShapeMismatch(f"c has {c.size} entries, A is {a.shape}, b has {b.size}")
    if max_iters is None:
        max_iters = 50 * max(n, m)

    # columns: x (n) | slack (m) | artificial (k) | rhs
    neg = b < 0
    k = int(neg.sum())
    t = np.zeros((m + 1, n + m + k + 1))
    sign = np.where(neg, -1.0, 1.0)
    t[:m, :n] = a * sign[:, None]
    t[np.arange(m), n + np.arange(m)] = sign
    t[:m, -1] = b * sign
    basis = n + np.arange(m)
    art_rows = np.flatnonzero(neg)
    t[art_rows, n + m + np.arange(k)] = 1.0
    basis[art_rows] = n + m + np.arange(k)

    used = 0
    scale = max(1.0, float(np.max(np.abs(b)))) if m else 1.0
    if k:
        # phase one: minimize the sum of artificials
        t[-1, :] = 0.0
        t[-1, n + m:n + m + k] = 1.0
        t[-1] -= t[art_rows].sum(axis=0)
        used = _run(t, basis, n + m + k, max_iters, used, eps)
        if -t[-1, -1] > 1e-9 * scale:
            raise Infeasible(f"LP infeasible (phase-one objective {-t[-1, -1]:.3g})")
        # drive remaining zero-level artificials out of the basis
        for row in np.flatnonzero(basis >= n + m):
            nz = np.flatnonzero(np.abs(t[row, :n + m]) > eps)
            if nz.size:
                _pivot(t, row, int(nz[0]))
                basis[row] = nz[0]
        keep = basis < n + m
        t = np.vstack([t[:m][keep], t[-1:]])
        basis = basis[keep]
        t = np.delete(t, np.s_[n + m:n + m + k], axis=1)

    # phase two
    t[-1, :] = 0.0
    t[-1, :n] = c
    cb = np.zeros(basis.size)
    xb_mask = basis < n
    cb[xb_mask] = c[basis[xb_mask]]
    t[-1] -= cb @ t[:-1]
    used = _run(t, basis, n + m, max_iters, used, eps)

    # polish the basic solution against the original constraint matrix
    full = np.hstack([a, np.eye(m)])
    x_all = np.zeros(n + m)
    try:
        x_all[basis] = np.linalg.solve(full[:, basis], b) if basis.size == m else \
            np.linalg.lstsq(full[:, basis], b, rcond=None)[0]
    except np.linalg.LinAlgError:
        x_all[basis] = t[:-1, -1]
    x_all = np.maximum(x_all, 0.0)
    x = x_all[:n]
    return LPResult(x, float(c @ x), used, basis.copy())
