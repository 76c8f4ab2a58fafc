"""Compiled per-slot recursions for the two-state HMM.

All loops work on per-slot log densities ``lb0``, ``lb1`` so that observations
far in the tail never underflow.  The filter is carried as the log-odds
``lam_k = log alpha_k(1) / alpha_k(0)``; ``z_k`` is its one-step prediction.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _log1pexp(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def predict_log_odds(lam, a00, a01, a10, a11):
    """``log (a01 + a11 e^lam) / (a00 + a10 e^lam)`` without overflow."""
    if lam > 0.0:
        e = math.exp(-lam)
        return math.log(a11 + a01 * e) - math.log(a10 + a00 * e)
    e = math.exp(lam)
    return math.log(a01 + a11 * e) - math.log(a00 + a10 * e)


@njit(cache=True)
def forward_filter(lb0, lb1, log_prior_odds, a00, a01, a10, a11):
    n = lb0.shape[0]
    z = np.empty(n)
    lam = np.empty(n)
    loglik = 0.0
    prior = log_prior_odds
    for k in range(n):
        # log Pr{q_k = 1 | past} and log Pr{q_k = 0 | past}
        lp1 = -_log1pexp(-prior)
        lp0 = -_log1pexp(prior)
        u = lp0 + lb0[k]
        v = lp1 + lb1[k]
        if u > v:
            loglik += u + math.log1p(math.exp(v - u))
        else:
            loglik += v + math.log1p(math.exp(u - v))
        lam[k] = prior + lb1[k] - lb0[k]
        z[k] = predict_log_odds(lam[k], a00, a01, a10, a11)
        prior = z[k]
    return z, lam, loglik


@njit(cache=True)
def forward_backward(lb0, lb1, log_prior_odds, a00, a01, a10, a11):
    """Scaled forward-backward pass.

    Returns smoothed posteriors ``gamma`` (n x 2), summed expected transition
    counts ``xi`` (2 x 2) and the log-likelihood.
    """
    n = lb0.shape[0]
    A = np.array([[a00, a01], [a10, a11]])
    alpha = np.empty((n, 2))
    bt = np.empty((n, 2))
    c = np.empty(n)
    loglik = 0.0
    prior = log_prior_odds
    for k in range(n):
        m = max(lb0[k], lb1[k])
        bt[k, 0] = math.exp(lb0[k] - m)
        bt[k, 1] = math.exp(lb1[k] - m)
        p1 = 1.0 / (1.0 + math.exp(-prior)) if prior > -700.0 else 0.0
        p0 = 1.0 / (1.0 + math.exp(prior)) if prior < 700.0 else 0.0
        c[k] = p0 * bt[k, 0] + p1 * bt[k, 1]
        loglik += math.log(c[k]) + m
        lam = prior + lb1[k] - lb0[k]
        if lam >= 0.0:
            e = math.exp(-lam)
            alpha[k, 1] = 1.0 / (1.0 + e)
            alpha[k, 0] = e / (1.0 + e)
        else:
            e = math.exp(lam)
            alpha[k, 0] = 1.0 / (1.0 + e)
            alpha[k, 1] = e / (1.0 + e)
        prior = predict_log_odds(lam, a00, a01, a10, a11)

    gamma = np.empty((n, 2))
    xi = np.zeros((2, 2))
    beta0 = 1.0
    beta1 = 1.0
    g0 = alpha[n - 1, 0]
    g1 = alpha[n - 1, 1]
    s = g0 + g1
    gamma[n - 1, 0] = g0 / s
    gamma[n - 1, 1] = g1 / s
    for k in range(n - 2, -1, -1):
        w0 = bt[k + 1, 0] * beta0 / c[k + 1]
        w1 = bt[k + 1, 1] * beta1 / c[k + 1]
        for i in range(2):
            xi[i, 0] += alpha[k, i] * A[i, 0] * w0
            xi[i, 1] += alpha[k, i] * A[i, 1] * w1
        nb0 = A[0, 0] * w0 + A[0, 1] * w1
        nb1 = A[1, 0] * w0 + A[1, 1] * w1
        beta0 = nb0
        beta1 = nb1
        g0 = alpha[k, 0] * beta0
        g1 = alpha[k, 1] * beta1
        s = g0 + g1
        gamma[k, 0] = g0 / s
        gamma[k, 1] = g1 / s
    return gamma, xi, loglik
