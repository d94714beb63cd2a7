"""Estimation of the decorrelation vector ``omega``.

``omega`` regresses the surrogate's cross-moments on the clean covariates,
``omega' = Sigma_12 Sigma_22^{-1}``.  In high dimensions it is estimated
sparsely, either by the Dantzig-type program

    min ||omega||_1  s.t.  ||Sigma_12' - Sigma_22 omega||_inf <= lambda'

or by an l1-penalized quadratic (lasso) on the same moments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cocolasso import (
    CorrectedMoments,
    CVTable,
    LassoOptions,
    _argmin_prefer_large,
    _check_grid,
    _raw_moments,
    fold_indices,
    lasso_gram_solve,
)
from .errors import NonConvergence, SolverError, ValidationError
from .model_data import Dataset
from .simplex import linprog_bland

__all__ = [
    "METHODS",
    "OmegaEstimate",
    "cv_select_lambda_prime",
    "dantzig_omega",
    "default_lambda_prime_grid",
    "estimate_omega",
    "lasso_omega",
]

METHODS = ("dantzig", "lasso")


@dataclass(frozen=True)
class OmegaEstimate:
    omega: np.ndarray
    lambda_prime: float
    method: str
    feasibility_gap: float
    l1_norm: float
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "omega": self.omega.tolist(),
            "lambda_prime": self.lambda_prime,
            "method": self.method,
            "feasibility_gap": self.feasibility_gap,
            "l1_norm": self.l1_norm,
            "iterations": self.iterations,
        }


def _feasibility_gap(s12, s22, omega, lam) -> float:
    if omega.size == 0:
        return float(-lam)
    return float(np.max(np.abs(s12 - s22 @ omega)) - lam)


def _check_lambda(lam):
    if not lam > 0:
        raise ValidationError(f"lambda_prime must be positive, got {lam}")


def _dantzig(s12, s22, lam, max_iters=None) -> OmegaEstimate:
    q = s12.size
    if np.max(np.abs(s12), initial=0.0) <= lam:
        return OmegaEstimate(np.zeros(q), float(lam), "dantzig",
                             _feasibility_gap(s12, s22, np.zeros(q), lam), 0.0, 0)
    # omega = op - om with op, om >= 0
    a = np.block([[s22, -s22], [-s22, s22]])
    b = np.concatenate([lam + s12, lam - s12])
    c = np.ones(2 * q)
    if max_iters is None:
        max_iters = 50 * (q + 1)
    res = linprog_bland(c, a, b, max_iters=max_iters)
    omega = res.x[:q] - res.x[q:]
    return OmegaEstimate(omega, float(lam), "dantzig",
                         _feasibility_gap(s12, s22, omega, lam),
                         float(np.abs(omega).sum()), res.iterations)


def dantzig_omega(m: CorrectedMoments, lambda_prime: float, max_iters=None) -> OmegaEstimate:
    """Solve the Dantzig-type program by a dense simplex LP."""
    _check_lambda(lambda_prime)
    return _dantzig(np.asarray(m.s12), np.asarray(m.s22), float(lambda_prime), max_iters)


def _lasso(s12, s22, lam, opts=None, warm=None) -> OmegaEstimate:
    sol = lasso_gram_solve(s22, s12, lam, opts, warm, info=True)
    omega = sol.theta
    return OmegaEstimate(omega, float(lam), "lasso",
                         _feasibility_gap(s12, s22, omega, lam),
                         float(np.abs(omega).sum()), sol.sweeps)


def lasso_omega(m: CorrectedMoments, lambda_prime: float,
                opts: LassoOptions | None = None) -> OmegaEstimate:
    """Minimize ``0.5 w' S22 w - S12 w + lambda' ||w||_1``.

    ``S22`` is an exact Gram matrix, so no PSD projection is needed.
    """
    _check_lambda(lambda_prime)
    return _lasso(np.asarray(m.s12), np.asarray(m.s22), float(lambda_prime), opts)


def estimate_omega(m: CorrectedMoments, lambda_prime: float, method: str = "dantzig",
                   **kwargs) -> OmegaEstimate:
    if method == "dantzig":
        return dantzig_omega(m, lambda_prime, **kwargs)
    if method == "lasso":
        return lasso_omega(m, lambda_prime, **kwargs)
    raise ValidationError(f"unknown omega method {method!r}; choose from {METHODS}")


def default_lambda_prime_grid(n: int, p: int, num: int = 30,
                              lo: float = 0.01, hi: float = 3.0) -> np.ndarray:
    """``num`` log-spaced values in ``[lo, hi] * sqrt(log p / n)``, descending."""
    rate = np.sqrt(np.log(p) / n)
    return np.geomspace(hi * rate, lo * rate, num)


def cv_select_lambda_prime(d: Dataset, grid=None, k_folds: int = 4, *,
                           method: str = "lasso", seed=0,
                           lasso_opts: LassoOptions | None = None):
    """K-fold choice of ``lambda'`` by held-out l2 prediction of the cross-moments.

    The validation score is ``||S12_val' - S22_val omega||_2^2``; ties go to
    the larger ``lambda'``.  Returns ``(lambda_prime_star, CVTable)``.
    """
    if method not in METHODS:
        raise ValidationError(f"unknown omega method {method!r}; choose from {METHODS}")
    if grid is None:
        grid = default_lambda_prime_grid(d.n, d.p)
    grid = _check_grid(grid)
    if grid.size == 1:
        return float(grid[0]), CVTable(grid, np.zeros((k_folds, 1)), 0)
    folds = fold_indices(d.n, k_folds, seed)
    order = np.argsort(-grid, kind="stable")
    scores = np.full((k_folds, grid.size), np.inf)
    for f, held in enumerate(folds):
        train = np.setdiff1d(np.arange(d.n), held)
        tr_sigma, _ = _raw_moments(d.subset(train))
        va_sigma, _ = _raw_moments(d.subset(held))
        s12, s22 = tr_sigma[0, 1:], tr_sigma[1:, 1:]
        v12, v22 = va_sigma[0, 1:], va_sigma[1:, 1:]
        warm = None
        for gi in order:
            try:
                if method == "lasso":
                    est = _lasso(s12, s22, grid[gi], lasso_opts, warm)
                    warm = est.omega
                else:
                    est = _dantzig(s12, s22, grid[gi])
            except (NonConvergence, SolverError):
                continue
            resid = v12 - v22 @ est.omega
            scores[f, gi] = float(resid @ resid)
    best = _argmin_prefer_large(grid, scores.mean(axis=0))
    return float(grid[best]), CVTable(grid, scores, best)
