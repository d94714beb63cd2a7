"""Corrected decorrelated score test and one-step estimator for ``beta``.

All quantities are on the scale of the supplied :class:`Dataset`; the CLI
standardizes before calling in here.  The variance formulas take the latent
covariate to have unit mean square, which :func:`~cdscore.model_data.standardize`
guarantees; callers passing raw data must scale it themselves.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm

from .cocolasso import CorrectedMoments, ThetaEstimate
from .decorrelation import OmegaEstimate
from .errors import (
    DegenerateDenominator,
    NegativeVarianceEstimate,
    NonPositiveVariance,
    ShapeMismatch,
    ValidationError,
)
from .model_data import Dataset

__all__ = [
    "EPS_FLOOR",
    "DENOM_FLOOR",
    "OneStepResult",
    "ScoreComponents",
    "TestResult",
    "corrected_score",
    "decorrelated_score",
    "finite_diff_score_derivative",
    "one_step",
    "one_step_variance",
    "score_derivative",
    "score_test",
    "sigma_eps_hat",
    "test_variance",
    "theoretical_power",
]

EPS_FLOOR = 1e-8
DENOM_FLOOR = 1e-6


def _omega_vec(omega) -> np.ndarray:
    if isinstance(omega, OmegaEstimate):
        return omega.omega
    return np.asarray(omega, dtype=float).ravel()


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")


@dataclass(frozen=True)
class ScoreComponents:
    s_beta: float
    s_gamma: np.ndarray
    decorrelated: float


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    t_stat: float
    p_value: float
    beta_star: float
    sigma2_h0: float
    sigma2_eps_h0: float
    alpha: float
    reject: bool
    sigma2_eps_h0_raw: float

    def to_dict(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v))
                for k, v in asdict(self).items()}


@dataclass(frozen=True)
class OneStepResult:
    beta_hat: float
    sigma2_beta: float
    ci_low: float
    ci_high: float
    alpha: float
    denominator: float
    beta_tilde: float
    sigma2_eps: float
    n: int

    @property
    def se(self) -> float:
        return float(np.sqrt(self.sigma2_beta / self.n))

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_dict(self) -> dict:
        out = asdict(self)
        out["n"] = int(self.n)
        out["se"] = self.se
        return out


def corrected_score(m: CorrectedMoments, theta) -> np.ndarray:
    """Gradient of the corrected loss, ``Sigma_hat theta - rho_hat`` (raw
    ``Sigma_hat``, not its projection)."""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape[0] != m.p:
        raise ShapeMismatch(f"theta has length {theta.shape[0]}, expected {m.p}")
    return m.sigma_hat @ theta - m.rho_hat


def decorrelated_score(m: CorrectedMoments, beta: float, gamma, omega) -> ScoreComponents:
    gamma = np.asarray(gamma, dtype=float).ravel()
    w = _omega_vec(omega)
    if gamma.shape[0] != m.p - 1 or w.shape[0] != m.p - 1:
        raise ShapeMismatch(
            f"gamma ({gamma.shape[0]}) and omega ({w.shape[0]}) must have length {m.p - 1}")
    s = corrected_score(m, np.concatenate([[beta], gamma]))
    s_beta = float(s[0])
    s_gamma = s[1:]
    return ScoreComponents(s_beta, s_gamma, s_beta - float(w @ s_gamma))


def score_derivative(m: CorrectedMoments, omega) -> float:
    """``d S / d beta = Sigma_11 - omega' Sigma_21``; the score is affine in beta."""
    return float(m.s11 - _omega_vec(omega) @ m.s12)


def finite_diff_score_derivative(m: CorrectedMoments, beta: float, gamma, omega,
                                 step: float = 1e-5) -> float:
    if not 1e-7 <= step <= 1e-4:
        raise ValidationError(f"step must lie in [1e-7, 1e-4], got {step}")
    up = decorrelated_score(m, beta + step, gamma, omega).decorrelated
    dn = decorrelated_score(m, beta - step, gamma, omega).decorrelated
    return (up - dn) / (2.0 * step)


def _sigma_eps_raw(d: Dataset, beta: float, gamma) -> float:
    gamma = np.asarray(gamma, dtype=float).ravel()
    resid = d.y - beta * d.w - d.z @ gamma
    return float(np.mean(resid ** 2) - beta ** 2 * d.sigma_u2)


def sigma_eps_hat(d: Dataset, beta: float, gamma, *, eps_floor: float = EPS_FLOOR) -> float:
    """Corrected residual variance ``mean((y - beta w - z gamma)^2) - beta^2 sigma_u2``.

    Values below ``eps_floor`` are clamped with a
    :class:`NegativeVarianceEstimate` warning.
    """
    raw = _sigma_eps_raw(d, beta, gamma)
    if raw < eps_floor:
        warnings.warn(f"corrected error variance {raw:.3g} clamped to {eps_floor:g}",
                      NegativeVarianceEstimate, stacklevel=2)
        return eps_floor
    return raw


def _score_variance(s2eps: float, beta: float, d: Dataset, proj: float) -> float:
    # (s2eps + b^2 su2)(1 - w'S21) + b^2 E(U^4) + s2eps su2 - b^2 su2^2
    su2 = d.sigma_u2
    b2 = beta * beta
    return (s2eps + b2 * su2) * (1.0 - proj) + b2 * d.eu4 + s2eps * su2 - b2 * su2 * su2


def test_variance(d: Dataset, m: CorrectedMoments, beta_star: float, gamma, omega,
                  *, sigma2_eps: float | None = None) -> float:
    """Plug-in variance of the decorrelated score under ``H0: beta = beta_star``."""
    if sigma2_eps is None:
        sigma2_eps = sigma_eps_hat(d, beta_star, gamma)
    proj = float(_omega_vec(omega) @ m.s12)
    v = _score_variance(sigma2_eps, beta_star, d, proj)
    if not v > 0:
        raise NonPositiveVariance(f"score variance estimate {v:.3g} is not positive")
    return v


test_variance.__test__ = False


def score_test(d: Dataset, m: CorrectedMoments, beta_star: float, theta_tilde: ThetaEstimate,
               omega, alpha: float = 0.05) -> TestResult:
    """Two-sided corrected decorrelated score test of ``H0: beta = beta_star``."""
    _check_alpha(alpha)
    gamma = theta_tilde.gamma
    raw = _sigma_eps_raw(d, beta_star, gamma)
    s2eps = sigma_eps_hat(d, beta_star, gamma)
    var = test_variance(d, m, beta_star, gamma, omega, sigma2_eps=s2eps)
    score = decorrelated_score(m, beta_star, gamma, omega).decorrelated
    t = float(np.sqrt(m.n) * score / np.sqrt(var))
    pval = float(2.0 * norm.sf(abs(t)))
    return TestResult(t, pval, float(beta_star), var, s2eps, float(alpha),
                      bool(pval < alpha), raw)


def one_step_variance(d: Dataset, m: CorrectedMoments, beta_hat: float, gamma, omega,
                      *, sigma2_eps: float | None = None) -> float:
    """Plug-in asymptotic variance of the one-step estimator."""
    if sigma2_eps is None:
        sigma2_eps = sigma_eps_hat(d, beta_hat, gamma)
    proj = float(_omega_vec(omega) @ m.s12)
    num = _score_variance(sigma2_eps, beta_hat, d, proj)
    v = num / (1.0 - proj) ** 2
    if not v > 0:
        raise NonPositiveVariance(f"one-step variance estimate {v:.3g} is not positive")
    return v


def one_step(d: Dataset, m: CorrectedMoments, theta_tilde: ThetaEstimate, omega,
             alpha: float = 0.05, *, denom_floor: float = DENOM_FLOOR) -> OneStepResult:
    """One Newton step on the decorrelated score from the initial estimate,
    with a Wald interval from the plug-in variance."""
    _check_alpha(alpha)
    denom = score_derivative(m, omega)
    if abs(denom) < denom_floor:
        raise DegenerateDenominator(
            f"|Sigma_11 - omega' Sigma_21| = {abs(denom):.3g} < {denom_floor:g}")
    beta_tilde = theta_tilde.beta
    gamma = theta_tilde.gamma
    score = decorrelated_score(m, beta_tilde, gamma, omega).decorrelated
    beta_hat = beta_tilde - score / denom
    s2eps = sigma_eps_hat(d, beta_hat, gamma)
    var = one_step_variance(d, m, beta_hat, gamma, omega, sigma2_eps=s2eps)
    half = norm.ppf(1.0 - alpha / 2.0) * np.sqrt(var / m.n)
    return OneStepResult(float(beta_hat), float(var), float(beta_hat - half),
                         float(beta_hat + half), float(alpha), float(denom),
                         float(beta_tilde), float(s2eps), int(m.n))


def theoretical_power(h: float, sigma2_beta: float, alpha: float = 0.05) -> float:
    """Asymptotic power at the local alternative ``beta_star + h / sqrt(n)``."""
    _check_alpha(alpha)
    if not sigma2_beta > 0:
        raise ValidationError(f"sigma2_beta must be positive, got {sigma2_beta}")
    z = norm.ppf(1.0 - alpha / 2.0)
    shift = h / np.sqrt(sigma2_beta)
    return float(norm.cdf(-z - shift) + norm.sf(z - shift))
