"""Compiled coordinate-descent kernel for Gram-form l1 problems.

Minimizes ``0.5 * t' S t - r' t + lam * ||t||_1`` with cyclic soft-threshold
updates, alternating full sweeps with sweeps restricted to the active set.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _objective(theta, grad, rho, lam):
    # t'St = t'(g + r), so the quadratic part is 0.5 t'g - 0.5 r't
    quad = 0.0
    l1 = 0.0
    for j in range(theta.shape[0]):
        quad += 0.5 * theta[j] * grad[j] - 0.5 * rho[j] * theta[j]
        l1 += abs(theta[j])
    return quad + lam * l1


@njit(cache=True)
def _sweep(sigma, rho, lam, theta, grad, frozen, active_only):
    max_change = 0.0
    p = theta.shape[0]
    for j in range(p):
        if frozen[j]:
            continue
        old = theta[j]
        if active_only and old == 0.0:
            continue
        sjj = sigma[j, j]
        u = sjj * old - grad[j]
        if u > lam:
            new = (u - lam) / sjj
        elif u < -lam:
            new = (u + lam) / sjj
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            theta[j] = new
            # sigma is symmetric; the row is contiguous
            row = sigma[j]
            for k in range(p):
                grad[k] += row[k] * delta
            if abs(delta) > max_change:
                max_change = abs(delta)
    return max_change


@njit(cache=True)
def _kkt(theta, grad, lam, frozen):
    worst = 0.0
    for j in range(theta.shape[0]):
        if frozen[j]:
            continue
        if theta[j] > 0.0:
            v = abs(grad[j] + lam)
        elif theta[j] < 0.0:
            v = abs(grad[j] - lam)
        else:
            v = abs(grad[j]) - lam
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def coordinate_descent(sigma, rho, lam, theta, frozen, tol, kkt_tol, max_sweeps, trace):
    """Run sweeps in place on ``theta``; returns (sweeps_used, converged).

    Stops once a full sweep moves no coordinate by ``tol`` or more, or the
    KKT conditions hold to ``kkt_tol``.  The second test matters for
    rank-deficient ``sigma``, where coordinate moves along flat directions
    shrink only slowly.  ``trace[i]`` receives the objective after sweep ``i``.
    """
    grad = sigma @ theta - rho
    sweeps = 0
    while sweeps < max_sweeps:
        change = _sweep(sigma, rho, lam, theta, grad, frozen, False)
        trace[sweeps] = _objective(theta, grad, rho, lam)
        sweeps += 1
        if change < tol or _kkt(theta, grad, lam, frozen) <= kkt_tol:
            return sweeps, True
        while sweeps < max_sweeps:
            change = _sweep(sigma, rho, lam, theta, grad, frozen, True)
            trace[sweeps] = _objective(theta, grad, rho, lam)
            sweeps += 1
            if change < tol or _kkt(theta, grad, lam, frozen) <= kkt_tol:
                break
    return sweeps, False
