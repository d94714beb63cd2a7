"""Nearest positive semi-definite matrix in the element-wise max norm.

Solves ``min_{B >= 0} ||K - B||_max`` by ADMM on the splitting
``A = B``: the A-step is the proximal map of the max norm (an element-wise
clip) and the B-step is the Euclidean projection onto the PSD cone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import EigFailure, NonConvergence, NotSymmetric, ShapeMismatch, ValidationError

__all__ = [
    "PsdProjection",
    "PsdProjectionOptions",
    "max_norm_distance",
    "nearest_psd",
    "project_psd_cone",
]


@dataclass(frozen=True)
class PsdProjectionOptions:
    admm_rho: float = 1.0
    tol_primal: float = 1e-7
    tol_dual: float = 1e-7
    max_iters: int = 10_000
    eig_floor: float = 1e-10
    # over-relaxation factor in (0, 2); 1.0 is plain ADMM
    relaxation: float = 1.6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if not (self.tol_primal > 0 and self.tol_dual > 0):
            raise ValidationError("tolerances must be positive")
        if not self.admm_rho > 0:
            raise ValidationError("admm_rho must be positive")
        if self.eig_floor < 0:
            raise ValidationError("eig_floor must be nonnegative")
        if not 0 < self.relaxation < 2:
            raise ValidationError("relaxation must lie in (0, 2)")


@dataclass(frozen=True)
class PsdProjection:
    matrix: np.ndarray
    distance: float
    iterations: int
    primal_residual: float
    dual_residual: float
    short_circuit: bool


def max_norm_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))


def _eigh(m):
    try:
        return scipy.linalg.eigh(m, driver="evd", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise EigFailure(f"eigendecomposition failed: {exc}") from exc


def project_psd_cone(m) -> np.ndarray:
    """Frobenius projection onto the PSD cone (negative eigenvalues set to 0)."""
    m = np.asarray(m, dtype=float)
    vals, vecs = _eigh(m)
    vals = np.maximum(vals, 0.0)
    out = (vecs * vals) @ vecs.T
    return (out + out.T) / 2.0


def _prox_max_norm(v: np.ndarray, t: float) -> np.ndarray:
    """Proximal map of ``t * ||.||_max``: clip ``v`` to ``[-tau, tau]`` where
    ``sum((|v| - tau)_+) = t`` (Moreau dual of the l1-ball projection)."""
    a = np.abs(v).ravel()
    if a.sum() <= t:
        return np.zeros_like(v)
    s = -np.sort(-a)
    taus = (np.cumsum(s) - t) / np.arange(1, s.size + 1)
    k = np.flatnonzero(s > taus)[-1]
    tau = taus[k]
    return np.clip(v, -tau, tau)


def _check_symmetric(k: np.ndarray) -> np.ndarray:
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {k.shape}")
    if not np.all(np.isfinite(k)):
        raise ValidationError("matrix contains non-finite values")
    scale = max(1.0, float(np.max(np.abs(k)))) if k.size else 1.0
    if k.size and np.max(np.abs(k - k.T)) > 1e-10 * scale:
        raise NotSymmetric(f"asymmetry {np.max(np.abs(k - k.T)):.3g} exceeds 1e-10")
    return (k + k.T) / 2.0


def _admm(k: np.ndarray, opts: PsdProjectionOptions) -> PsdProjection:
    rho = opts.admm_rho
    alpha = opts.relaxation
    b = project_psd_cone(k)
    u = np.zeros_like(k)
    r = s = np.inf
    for it in range(1, opts.max_iters + 1):
        a = k + _prox_max_norm(b - u - k, 1.0 / rho)
        a_hat = alpha * a + (1.0 - alpha) * b
        b_old = b
        b = project_psd_cone(a_hat + u)
        u = u + a_hat - b
        r = float(np.max(np.abs(a - b)))
        s = rho * float(np.max(np.abs(b - b_old)))
        if r <= opts.tol_primal and s <= opts.tol_dual:
            return PsdProjection(b, max_norm_distance(k, b), it, r, s, False)
    raise NonConvergence(
        f"ADMM did not converge in {opts.max_iters} iterations "
        f"(primal {r:.3g}, dual {s:.3g})",
        best=b,
        diagnostics={"iterations": opts.max_iters, "primal_residual": r,
                     "dual_residual": s, "distance": max_norm_distance(k, b)},
    )


def nearest_psd(k, opts: PsdProjectionOptions | None = None, *, info: bool = False):
    """PSD matrix closest to ``k`` in max norm.

    ``k`` is returned unchanged (after exact symmetrization) when its smallest
    eigenvalue is at least ``-opts.eig_floor``.  With ``info=True`` a
    :class:`PsdProjection` carrying solver diagnostics is returned instead of
    the bare matrix.
    """
    opts = opts or PsdProjectionOptions()
    k = _check_symmetric(np.asarray(k, dtype=float))
    if k.size == 0:
        res = PsdProjection(k.copy(), 0.0, 0, 0.0, 0.0, True)
        return res if info else res.matrix
    min_eig = _eigh(k)[0][0]
    if min_eig >= -opts.eig_floor:
        res = PsdProjection(k, 0.0, 0, 0.0, 0.0, True)
    else:
        res = _admm(k, opts)
    return res if info else res.matrix
