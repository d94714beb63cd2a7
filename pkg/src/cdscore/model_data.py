"""Observed-data model, standardization and replicate-based error moments.

The observed data are ``(y, w, z)`` with a single error-prone covariate
``w = x + u`` and a clean design ``z``.  The measurement error ``u`` is
summarised by its variance ``sigma_u2`` and fourth moment ``eu4``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateVariance,
    InvalidReplicates,
    NegativeMomentEstimate,
    ShapeMismatch,
    ValidationError,
)

__all__ = [
    "AveragedSurrogate",
    "Dataset",
    "ReplicateMatrix",
    "StandardizationRecord",
    "averaged_error_moments",
    "destandardize",
    "estimate_error_moments",
    "gaussian_eu4",
    "standardize",
    "surrogate_from_replicates",
]


def gaussian_eu4(sigma_u2: float) -> float:
    """Fourth moment of a centred normal with variance ``sigma_u2``."""
    return 3.0 * sigma_u2 * sigma_u2


@dataclass(frozen=True)
class Dataset:
    """Response ``y``, surrogate ``w``, clean covariates ``z`` and error moments.

    ``eu4`` defaults to the Gaussian value ``3 * sigma_u2**2`` when omitted.
    """

    y: np.ndarray
    w: np.ndarray
    z: np.ndarray
    sigma_u2: float = 0.0
    eu4: float | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        w = np.asarray(self.w, dtype=float).ravel()
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if z.ndim != 2:
            raise ShapeMismatch(f"z must be a matrix, got ndim={z.ndim}")
        n = y.shape[0]
        if w.shape[0] != n or z.shape[0] != n:
            raise ShapeMismatch(
                f"row counts differ: y={n}, w={w.shape[0]}, z={z.shape[0]}")
        if n < 2:
            raise ValidationError(f"need n >= 2 observations, got {n}")
        if z.shape[1] < 1:
            raise ValidationError("need at least one clean covariate (p >= 2)")
        for name, arr in (("y", y), ("w", w), ("z", z)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite values")
        sigma_u2 = float(self.sigma_u2)
        if not np.isfinite(sigma_u2) or sigma_u2 < 0:
            raise ValidationError(f"sigma_u2 must be finite and >= 0, got {sigma_u2}")
        eu4 = gaussian_eu4(sigma_u2) if self.eu4 is None else float(self.eu4)
        if not np.isfinite(eu4) or eu4 < 0:
            raise ValidationError(f"eu4 must be finite and >= 0, got {eu4}")
        # Jensen: E(U^4) >= E(U^2)^2
        if eu4 < sigma_u2 * sigma_u2 * (1.0 - 1e-12):
            raise ValidationError(
                f"eu4={eu4:.6g} is below sigma_u2**2={sigma_u2 * sigma_u2:.6g}")
        for name, val in (("y", y), ("w", w), ("z", z), ("sigma_u2", sigma_u2), ("eu4", eu4)):
            object.__setattr__(self, name, val)
        y.flags.writeable = False
        w.flags.writeable = False
        z.flags.writeable = False

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return 1 + self.z.shape[1]

    @property
    def design(self) -> np.ndarray:
        """Observed design ``(w, z)`` as an ``n x p`` matrix."""
        return np.column_stack([self.w, self.z])

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.y[rows], self.w[rows], self.z[rows],
                       self.sigma_u2, self.eu4)


@dataclass(frozen=True)
class StandardizationRecord:
    """Offsets and scales mapping standardized estimates back to raw units."""

    y_mean: float
    w_mean: float
    z_means: np.ndarray
    w_scale: float
    z_scales: np.ndarray
    sigma_u2_raw: float
    eu4_raw: float

    @property
    def sigma_u2_standardized(self) -> float:
        return self.sigma_u2_raw * self.w_scale ** 2

    @property
    def eu4_standardized(self) -> float:
        return self.eu4_raw * self.w_scale ** 4

    def beta_to_raw(self, beta):
        return np.asarray(beta) * self.w_scale

    def gamma_to_raw(self, gamma):
        return np.asarray(gamma) * self.z_scales

    def theta_to_raw(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.concatenate([[theta[0] * self.w_scale], theta[1:] * self.z_scales])

    def intercept_raw(self, theta) -> float:
        raw = self.theta_to_raw(theta)
        return float(self.y_mean - raw[0] * self.w_mean - raw[1:] @ self.z_means)

    def to_dict(self) -> dict:
        return {
            "y_mean": self.y_mean,
            "w_mean": self.w_mean,
            "z_means": self.z_means.tolist(),
            "w_scale": self.w_scale,
            "z_scales": self.z_scales.tolist(),
            "sigma_u2_raw": self.sigma_u2_raw,
            "eu4_raw": self.eu4_raw,
        }


def standardize(raw: Dataset) -> tuple[Dataset, StandardizationRecord]:
    """Centre all variables and rescale so that ``mean(z_j**2) == 1`` and
    ``mean(w**2) == 1 + sigma_u2`` on the returned scale.

    ``w`` and the error moments are scaled jointly by
    ``1 / sqrt(mean(w_c**2) - sigma_u2)``, so the implied latent covariate has
    unit mean square.
    """
    y_mean = float(raw.y.mean())
    w_mean = float(raw.w.mean())
    z_means = raw.z.mean(axis=0)
    yc = raw.y - y_mean
    wc = raw.w - w_mean
    zc = raw.z - z_means

    z_ms = np.mean(zc ** 2, axis=0)
    bad = np.flatnonzero(~(z_ms > 0))
    if bad.size:
        raise DegenerateVariance(f"clean covariate column(s) {bad.tolist()} have zero variance")
    latent_ms = float(np.mean(wc ** 2)) - raw.sigma_u2
    if not latent_ms > 0:
        raise DegenerateVariance(
            "error variance claims all of w's variance: "
            f"mean(w**2)={np.mean(wc ** 2):.6g} <= sigma_u2={raw.sigma_u2:.6g}")

    w_scale = 1.0 / np.sqrt(latent_ms)
    z_scales = 1.0 / np.sqrt(z_ms)
    rec = StandardizationRecord(
        y_mean=y_mean,
        w_mean=w_mean,
        z_means=z_means,
        w_scale=float(w_scale),
        z_scales=z_scales,
        sigma_u2_raw=raw.sigma_u2,
        eu4_raw=raw.eu4,
    )
    std = Dataset(yc, wc * w_scale, zc * z_scales,
                  rec.sigma_u2_standardized, rec.eu4_standardized)
    return std, rec


def destandardize(std: Dataset, rec: StandardizationRecord) -> Dataset:
    """Inverse of :func:`standardize`."""
    return Dataset(
        std.y + rec.y_mean,
        std.w / rec.w_scale + rec.w_mean,
        std.z / rec.z_scales + rec.z_means,
        rec.sigma_u2_raw,
        rec.eu4_raw,
    )


@dataclass(frozen=True)
class ReplicateMatrix:
    """``n x m`` matrix of repeated surrogate measurements, ``m >= 2``."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise InvalidReplicates(f"replicates must be a matrix, got ndim={v.ndim}")
        if v.shape[1] < 2:
            raise InvalidReplicates(f"need m >= 2 replicates per subject, got {v.shape[1]}")
        if not np.all(np.isfinite(v)):
            raise InvalidReplicates("replicates contain non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


def _as_replicates(reps) -> ReplicateMatrix:
    return reps if isinstance(reps, ReplicateMatrix) else ReplicateMatrix(reps)


def estimate_error_moments(reps) -> tuple[float, float]:
    """Estimate ``(sigma_u2, eu4)`` from within-subject replicate differences.

    Uses ``W_ik - W_ij = U_ik - U_ij`` pooled over all ``j < k`` pairs with
    equal weights: ``var(U_k - U_j) = 2 sigma^2`` and
    ``E(U_k - U_j)^4 = 2 E(U^4) + 6 sigma^4``.

    A :class:`NegativeMomentEstimate` warning is issued when the fourth-moment
    estimate falls below ``sigma_u2**2``; the raw value is still returned.
    """
    v = _as_replicates(reps).values
    j, k = np.triu_indices(v.shape[1], 1)
    d = (v[:, k] - v[:, j]).ravel()
    # differences have known mean zero, so moments are taken about zero
    m2 = float(np.mean(d ** 2))
    m4 = float(np.mean(d ** 4))
    sigma_u2 = m2 / 2.0
    eu4 = (m4 - 6.0 * sigma_u2 ** 2) / 2.0
    if eu4 < sigma_u2 ** 2:
        warnings.warn(
            f"fourth-moment estimate {eu4:.6g} is below sigma_u2**2={sigma_u2 ** 2:.6g}; "
            "clamp to the Jensen floor if appropriate",
            NegativeMomentEstimate, stacklevel=2)
    return sigma_u2, eu4


class AveragedSurrogate(NamedTuple):
    w: np.ndarray
    sigma_u2: float
    eu4: float


def averaged_error_moments(sigma_u2: float, eu4: float, m: int) -> tuple[float, float]:
    """Variance and fourth moment of the mean of ``m`` iid errors."""
    if m < 1:
        raise InvalidReplicates(f"m must be >= 1, got {m}")
    var = sigma_u2 / m
    fourth = 3.0 * sigma_u2 ** 2 * (1.0 / m ** 2 - 1.0 / m ** 3) + eu4 / m ** 3
    return var, fourth


def surrogate_from_replicates(reps, sigma_u2: float | None = None,
                              eu4: float | None = None) -> AveragedSurrogate:
    """Row means of the replicates plus the error moments of the average.

    ``sigma_u2`` and ``eu4`` are single-measurement moments; they are
    estimated from ``reps`` when not supplied.
    """
    r = _as_replicates(reps)
    if sigma_u2 is None or eu4 is None:
        est_s2, est_u4 = estimate_error_moments(r)
        sigma_u2 = est_s2 if sigma_u2 is None else sigma_u2
        eu4 = est_u4 if eu4 is None else eu4
    var, fourth = averaged_error_moments(float(sigma_u2), float(eu4), r.m)
    return AveragedSurrogate(r.values.mean(axis=1), var, fourth)
