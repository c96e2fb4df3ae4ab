"""Compiled coordinate-ascent sweeps over SNPs.

Both model families share one update shape.  For trait k with target
vector ``t`` and precision weight ``w`` the effect posterior of SNP j is

    s2 = 1 / (w * x'x + 1 / sigma_beta_sq)
    mu = s2 * w * x'(t - fitted_without_j)

Quantitative traits use ``t = y, w = 1 / sigma_e_sq``; binary traits use
``t = y* / a - Z phi, w = a``.  ``fitted`` (= X m) is updated in place.
"""

import numpy as np
from numba import njit

POST_FLOOR = 1e-300


@njit(cache=True)
def _effect(X, j, t, fitted, m_old, xtx_j, w, sb):
    n = X.shape[0]
    acc = 0.0
    for i in range(n):
        acc += X[i, j] * (t[i] - fitted[i])
    acc += m_old * xtx_j
    s2 = 1.0 / (w * xtx_j + 1.0 / sb)
    return s2 * w * acc, s2


@njit(cache=True)
def _shift(X, j, fitted, delta):
    if delta != 0.0:
        for i in range(X.shape[0]):
            fitted[i] += delta * X[i, j]


@njit(cache=True)
def sweep_joint(X1, X2, t1, t2, w1, w2, xtx1, xtx2, sb1, sb2, log_prior,
                mu, s_sq, post, fit1, fit2, order):
    """One pass of the four-groups E-step in the SNP order ``order``."""
    half_lsb1 = 0.5 * np.log(sb1)
    half_lsb2 = 0.5 * np.log(sb2)
    A = np.empty(4)
    for jj in range(order.shape[0]):
        j = order[jj]
        inc1 = post[j, 2] + post[j, 3]
        inc2 = post[j, 1] + post[j, 3]
        m1_old = inc1 * mu[0, j]
        m2_old = inc2 * mu[1, j]
        mu1, s1 = _effect(X1, j, t1, fit1, m1_old, xtx1[j], w1, sb1)
        mu2, s2 = _effect(X2, j, t2, fit2, m2_old, xtx2[j], w2, sb2)
        mu[0, j] = mu1
        mu[1, j] = mu2
        s_sq[0, j] = s1
        s_sq[1, j] = s2
        b1 = 0.5 * np.log(s1) + 0.5 * mu1 * mu1 / s1
        b2 = 0.5 * np.log(s2) + 0.5 * mu2 * mu2 / s2
        A[0] = log_prior[0] + half_lsb1 + half_lsb2
        A[1] = log_prior[1] + half_lsb1 + b2
        A[2] = log_prior[2] + b1 + half_lsb2
        A[3] = log_prior[3] + b1 + b2
        amax = A[0]
        for l in range(4):
            if not np.isfinite(A[l]):
                return j
            if A[l] > amax:
                amax = A[l]
        tot = 0.0
        for l in range(4):
            A[l] = np.exp(A[l] - amax)
            tot += A[l]
        for l in range(4):
            v = A[l] / tot
            post[j, l] = v if v > POST_FLOOR else POST_FLOOR
        _shift(X1, j, fit1, (post[j, 2] + post[j, 3]) * mu1 - m1_old)
        _shift(X2, j, fit2, (post[j, 1] + post[j, 3]) * mu2 - m2_old)
    return -1


@njit(cache=True)
def sweep_single(X, t, w, xtx, sb, log_prior, mu, s_sq, post, fit, order):
    """One pass of the two-groups E-step; ``log_prior`` = (log(1-pi), log(pi))."""
    half_lsb = 0.5 * np.log(sb)
    for jj in range(order.shape[0]):
        j = order[jj]
        m_old = post[j, 1] * mu[0, j]
        mu1, s1 = _effect(X, j, t, fit, m_old, xtx[j], w, sb)
        mu[0, j] = mu1
        s_sq[0, j] = s1
        a0 = log_prior[0] + half_lsb
        a1 = log_prior[1] + 0.5 * np.log(s1) + 0.5 * mu1 * mu1 / s1
        if not (np.isfinite(a0) and np.isfinite(a1)):
            return j
        amax = a0 if a0 > a1 else a1
        e0 = np.exp(a0 - amax)
        e1 = np.exp(a1 - amax)
        v0 = e0 / (e0 + e1)
        v1 = e1 / (e0 + e1)
        post[j, 0] = v0 if v0 > POST_FLOOR else POST_FLOOR
        post[j, 1] = v1 if v1 > POST_FLOOR else POST_FLOOR
        _shift(X, j, fit, post[j, 1] * mu1 - m_old)
    return -1
