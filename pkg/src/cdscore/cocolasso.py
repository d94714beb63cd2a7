"""Corrected moments and the CoCoLasso initial estimator.

The corrected Gram matrix subtracts the measurement-error variance from the
surrogate's diagonal entry.  Because that matrix can be indefinite, the
penalized fit runs on its nearest PSD matrix (max norm), which keeps the
problem convex.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._coord import coordinate_descent
from .errors import (
    EmptyGrid,
    FoldTooSmall,
    NonConvergence,
    ShapeMismatch,
    SingularDiagonal,
    SupportTooLarge,
    ValidationError,
)
from .model_data import Dataset
from .psd import PsdProjectionOptions, nearest_psd

__all__ = [
    "CVTable",
    "CorrectedMoments",
    "LassoOptions",
    "LassoSolution",
    "ThetaEstimate",
    "cocolasso_fit",
    "corrected_moments",
    "cv_select_lambda",
    "default_lambda_grid",
    "fold_indices",
    "kkt_residuals",
    "lasso_gram_solve",
]


@dataclass(frozen=True)
class CorrectedMoments:
    """Corrected Gram matrix, its PSD projection and corrected cross-moments."""

    sigma_hat: np.ndarray
    sigma_tilde: np.ndarray
    rho_hat: np.ndarray
    n: int
    sigma_u2: float
    projection_distance: float = 0.0
    projection_iters: int = 0

    @property
    def p(self) -> int:
        return self.rho_hat.shape[0]

    @property
    def s11(self) -> float:
        return float(self.sigma_hat[0, 0])

    @property
    def s12(self) -> np.ndarray:
        return self.sigma_hat[0, 1:]

    @property
    def s22(self) -> np.ndarray:
        return self.sigma_hat[1:, 1:]

    @property
    def rho1(self) -> float:
        return float(self.rho_hat[0])

    @property
    def rho2(self) -> np.ndarray:
        return self.rho_hat[1:]


def _raw_moments(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    x = d.design
    sigma_hat = x.T @ x / d.n
    sigma_hat[0, 0] -= d.sigma_u2
    sigma_hat = (sigma_hat + sigma_hat.T) / 2.0
    rho_hat = x.T @ d.y / d.n
    return sigma_hat, rho_hat


def corrected_moments(d: Dataset, opts: PsdProjectionOptions | None = None,
                      *, project: bool = True) -> CorrectedMoments:
    """Build ``Sigma_hat``, ``rho_hat`` and ``Sigma_tilde = (Sigma_hat)_+``.

    With ``project=False`` the projection is skipped and ``sigma_tilde`` is
    left equal to ``sigma_hat`` (used for validation folds, which only need
    the raw moments).
    """
    sigma_hat, rho_hat = _raw_moments(d)
    if not project:
        return CorrectedMoments(sigma_hat, sigma_hat, rho_hat, d.n, d.sigma_u2)
    proj = nearest_psd(sigma_hat, opts, info=True)
    return CorrectedMoments(sigma_hat, proj.matrix, rho_hat, d.n, d.sigma_u2,
                            proj.distance, proj.iterations)


# ---------------------------------------------------------------------------
# Gram-form lasso
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LassoOptions:
    kkt_tol: float = 1e-7
    tol: float = 1e-9
    max_sweeps: int = 10_000
    diag_floor: float = 1e-12


@dataclass(frozen=True)
class LassoSolution:
    theta: np.ndarray
    sweeps: int
    objective_trace: np.ndarray = field(repr=False)
    kkt_active: float
    kkt_inactive: float
    frozen: np.ndarray = field(repr=False)


def kkt_residuals(sigma, rho, lam, theta) -> tuple[float, float]:
    """Return ``(active, inactive)`` KKT violations.

    ``active`` is ``max |g_j + lam sign(theta_j)|`` over nonzero coordinates;
    ``inactive`` is ``max (|g_j| - lam)_+`` over zero coordinates, with
    ``g = sigma @ theta - rho``.
    """
    g = sigma @ theta - rho
    nz = theta != 0
    act = float(np.max(np.abs(g[nz] + lam * np.sign(theta[nz])), initial=0.0))
    inact = float(np.max(np.abs(g[~nz]) - lam, initial=0.0))
    return act, max(inact, 0.0)


def lasso_gram_solve(sigma, rho, lam: float, opts: LassoOptions | None = None,
                     theta0=None, *, info: bool = False):
    """Minimize ``0.5 t' sigma t - rho' t + lam ||t||_1`` by coordinate descent.

    ``sigma`` must be PSD.  Coordinates with ``sigma_jj <= diag_floor`` are
    frozen at zero with a :class:`SingularDiagonal` warning.
    """
    opts = opts or LassoOptions()
    sigma = np.ascontiguousarray(sigma, dtype=float)
    rho = np.ascontiguousarray(rho, dtype=float).ravel()
    p = rho.shape[0]
    if sigma.shape != (p, p):
        raise ShapeMismatch(f"sigma has shape {sigma.shape}, rho has length {p}")
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}")
    frozen = np.diag(sigma) <= opts.diag_floor
    if frozen.any():
        warnings.warn(f"coordinates {np.flatnonzero(frozen).tolist()} have diagonal "
                      f"<= {opts.diag_floor:g}; frozen at 0", SingularDiagonal, stacklevel=2)
    theta = np.zeros(p) if theta0 is None else np.array(theta0, dtype=float).ravel()
    theta[frozen] = 0.0

    trace = np.empty(opts.max_sweeps)
    used = 0
    tol = opts.tol
    while True:
        sweeps, converged = coordinate_descent(
            sigma, rho, float(lam), theta, frozen, tol, opts.kkt_tol,
            opts.max_sweeps - used, trace[used:])
        used += sweeps
        if not converged:
            raise NonConvergence(f"coordinate descent hit {opts.max_sweeps} sweeps",
                                 best=theta.copy(), diagnostics={"sweeps": used})
        act, inact = kkt_residuals(sigma, rho, lam, theta)
        if (act <= opts.kkt_tol and inact <= opts.kkt_tol) or tol < 1e-15:
            break
        tol /= 10.0
    sol = LassoSolution(theta, used, trace[:used].copy(), act, inact, frozen)
    return sol if info else theta


# ---------------------------------------------------------------------------
# CoCoLasso
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThetaEstimate:
    beta: float
    gamma: np.ndarray
    support: np.ndarray
    lam: float
    refitted: bool
    solver_iters: int
    penalized: np.ndarray = field(repr=False, default=None)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([[self.beta], self.gamma])

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "gamma": self.gamma.tolist(),
            "support": self.support.tolist(),
            "lambda": self.lam,
            "refitted": self.refitted,
            "solver_iters": self.solver_iters,
        }


def _refit(m: CorrectedMoments, support: np.ndarray) -> np.ndarray:
    theta = np.zeros(m.p)
    if support.size == 0:
        return theta
    sub = m.sigma_tilde[np.ix_(support, support)]
    rhs = m.rho_hat[support]
    try:
        theta[support] = np.linalg.solve(sub, rhs)
    except np.linalg.LinAlgError:
        sub = nearest_psd((sub + sub.T) / 2.0)
        theta[support] = np.linalg.solve(sub + 1e-10 * np.eye(support.size), rhs)
    return theta


def _theta_estimate(m: CorrectedMoments, lam: float, refit: bool,
                    lasso_opts: LassoOptions | None, theta0=None) -> ThetaEstimate:
    sol = lasso_gram_solve(m.sigma_tilde, m.rho_hat, lam, lasso_opts, theta0, info=True)
    pen = sol.theta
    support = np.flatnonzero(pen)
    theta = pen
    refitted = False
    if refit:
        if support.size > m.n:
            warnings.warn(f"support size {support.size} exceeds n={m.n}; refit skipped",
                          SupportTooLarge, stacklevel=3)
        else:
            theta = _refit(m, support)
            refitted = True
    return ThetaEstimate(float(theta[0]), theta[1:].copy(), support, float(lam),
                         refitted, sol.sweeps, pen.copy())


def cocolasso_fit(d: Dataset, lam: float, refit: bool = True,
                  psd_opts: PsdProjectionOptions | None = None,
                  lasso_opts: LassoOptions | None = None,
                  moments: CorrectedMoments | None = None) -> ThetaEstimate:
    """Penalized fit on ``(Sigma_tilde, rho_hat)``, optionally refit on the
    selected support with zeros elsewhere."""
    m = moments if moments is not None else corrected_moments(d, psd_opts)
    return _theta_estimate(m, lam, refit, lasso_opts)


def default_lambda_grid(rho_hat, num: int = 50, ratio: float = 1e-3) -> np.ndarray:
    """``num`` log-spaced values from ``max|rho_hat|`` down to ``ratio`` times it."""
    top = float(np.max(np.abs(rho_hat)))
    if not top > 0:
        top = 1.0
    return np.geomspace(top, top * ratio, num)


def fold_indices(n: int, k_folds: int, seed=0) -> list[np.ndarray]:
    """Random partition of ``range(n)`` into ``k_folds`` near-equal folds."""
    if k_folds < 2:
        raise ValidationError(f"k_folds must be >= 2, got {k_folds}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = [np.sort(f) for f in np.array_split(perm, k_folds)]
    small = [len(f) for f in folds if len(f) < 2]
    if small:
        raise FoldTooSmall(f"n={n} split into {k_folds} folds leaves a fold with "
                           f"{min(small)} observation(s)")
    return folds


@dataclass(frozen=True)
class CVTable:
    grid: np.ndarray
    scores: np.ndarray  # folds x grid
    best_index: int

    @property
    def mean(self) -> np.ndarray:
        return self.scores.mean(axis=0)

    @property
    def se(self) -> np.ndarray:
        k = self.scores.shape[0]
        return self.scores.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.zeros(self.grid.size)

    @property
    def best(self) -> float:
        return float(self.grid[self.best_index])

    def rows(self) -> list[dict]:
        mean, se = self.mean, self.se
        return [{"lambda": float(g), "cv_mean": float(a), "cv_se": float(b)}
                for g, a, b in zip(self.grid, mean, se)]


def _argmin_prefer_large(grid: np.ndarray, mean: np.ndarray) -> int:
    finite = np.isfinite(mean)
    if not finite.any():
        # every candidate failed; fall back to the strongest regularization
        return int(np.argmax(grid))
    best = np.min(mean[finite])
    # warm starts can leave last-bit differences between equal penalties
    ties = np.flatnonzero(finite & (mean <= best + 1e-12 * max(1.0, abs(best))))
    return int(ties[np.argmax(grid[ties])])


def _check_grid(grid) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise EmptyGrid("tuning grid is empty")
    if not np.all(grid > 0):
        raise ValidationError("tuning grid values must be positive")
    return grid


def cv_select_lambda(d: Dataset, grid=None, k_folds: int = 5,
                     opts: PsdProjectionOptions | None = None, *, seed=0,
                     refit: bool = True, lasso_opts: LassoOptions | None = None):
    """K-fold choice of the CoCoLasso penalty.

    Each fold is fitted on its training rows and scored on the held-out rows
    by the corrected validation loss ``0.5 t' Sigma_hat_val t - rho_val' t``.
    The minimizer of the mean score wins; ties go to the larger penalty.
    Returns ``(lambda_star, CVTable)``.
    """
    if grid is None:
        grid = default_lambda_grid(_raw_moments(d)[1])
    grid = _check_grid(grid)
    if grid.size == 1:
        return float(grid[0]), CVTable(grid, np.zeros((k_folds, 1)), 0)
    folds = fold_indices(d.n, k_folds, seed)
    order = np.argsort(-grid, kind="stable")
    scores = np.full((k_folds, grid.size), np.inf)
    for f, held in enumerate(folds):
        train = np.setdiff1d(np.arange(d.n), held)
        m_tr = corrected_moments(d.subset(train), opts)
        val_sigma, val_rho = _raw_moments(d.subset(held))
        warm = None
        for gi in order:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", SupportTooLarge)
                    est = _theta_estimate(m_tr, grid[gi], refit, lasso_opts, warm)
            except NonConvergence:
                continue
            warm = est.penalized
            t = est.theta
            scores[f, gi] = 0.5 * t @ val_sigma @ t - val_rho @ t
    best = _argmin_prefer_large(grid, scores.mean(axis=0))
    return float(grid[best]), CVTable(grid, scores, best)
