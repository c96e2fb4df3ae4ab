"""Variational Bayes EM for case-control traits via the Bohning bound.

The log-sigmoid likelihood is replaced by a quadratic lower bound with
fixed curvature ``a = 1/4`` anchored at per-sample points ``psi``, which
turns every coordinate update into its Gaussian counterpart with a working
response ``y* = (1 + b) y``.
"""

from __future__ import annotations

import logging
import time

import numpy as np
import scipy.linalg as la
from scipy.special import expit

from . import _sweep
from .data import (
    BINARY,
    DataError,
    FitConfig,
    FitResult,
    GroupProbs,
    GwasDataset,
    ModelParams,
    NumericalError,
    VariationalState,
)
from .quant import (
    PRIOR_FLOOR,
    _check_finite,
    _check_inputs,
    _prior_kw,
    effect_variance,
    group_kl,
    init_state,
    lfdr_matrix,
    log_prior_of,
    prior_vector,
    slab_term,
    update_group_probs,
    update_slab_variance,
)

logger = logging.getLogger(__name__)

CURVATURE = 0.25
MAX_CONDITION = 1e12


def log1pexp(x):
    """log(1 + e^x) without overflow."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 30.0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 30.0))))


def bohning_coefficients(psi):
    """Linear and constant coefficients of the bound anchored at ``psi``.

    log sigmoid(x) >= -a x^2 / 2 + (1 + b) x - c, with equality at x = psi.
    """
    psi = np.asarray(psi, dtype=float)
    sig = expit(psi)
    b = CURVATURE * psi - sig
    c = 0.5 * CURVATURE * psi**2 - sig * psi + log1pexp(psi)
    if b.ndim == 0:
        return float(b), float(c)
    return b, c


def working_response(y, b):
    return (1.0 + np.asarray(b, dtype=float)) * np.asarray(y, dtype=float)


class _Covariates:
    """Cholesky factor of Z'Z, rejecting ill-conditioned or dependent designs."""

    def __init__(self, Z):
        self.Z = np.asarray(Z, dtype=float)
        cond = np.linalg.cond(self.Z)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise DataError(
                f"covariate matrix is rank deficient (condition number {cond:.3g}); "
                f"dependent columns: {dependent_columns(self.Z)}"
            )
        self.factor = la.cho_factor(self.Z.T @ self.Z)

    def solve(self, rhs):
        return la.cho_solve(self.factor, rhs)


def dependent_columns(Z, tol=1e-10):
    """Indices of columns that are linear combinations of earlier columns."""
    Z = np.asarray(Z, dtype=float)
    bad, rank = [], 0
    for j in range(Z.shape[1]):
        r = np.linalg.matrix_rank(Z[:, : j + 1], tol=tol * max(1.0, np.abs(Z).max()))
        if r == rank:
            bad.append(j)
        rank = r
    return bad


def update_covariates(Z, y_star, fitted):
    """Fixed effects phi = (Z'Z)^{-1} (Z'y*/a - Z'X m)."""
    cov = Z if isinstance(Z, _Covariates) else _Covariates(Z)
    return cov.solve(cov.Z.T @ (np.asarray(y_star) / CURVATURE - np.asarray(fitted)))


def update_psi(y, fitted, Z, phi):
    """Anchor points at the current mean of y * eta."""
    return np.asarray(y) * (np.asarray(fitted) + np.asarray(Z) @ np.asarray(phi))


def update_effect_posterior_binary(j: int, k: int, datasets, state: VariationalState, params: ModelParams):
    """Closed-form (mu_kj, s2_kj) under the quadratic bound."""
    d = datasets[k]
    X, Z = d.genotypes, d.covariates
    x = X[:, j]
    b, _ = bohning_coefficients(state.psi[k])
    ystar = working_response(d.phenotype, b)
    m = state.effects()[k].copy()
    m[j] = 0.0
    s2 = 1.0 / (CURVATURE * float(x @ x) + 1.0 / params.sigma_beta_sq[k])
    num = x @ ystar - CURVATURE * x @ (Z @ params.phi[k]) - CURVATURE * x @ (X @ m)
    return float(num * s2), s2


def _binary_bound(y_list, Z_list, xtx_list, fitted, state, params) -> float:
    inc = state.inclusion()
    var = effect_variance(inc, state.mu, state.s_sq)
    total = 0.0
    for k in range(len(y_list)):
        b, c = bohning_coefficients(state.psi[k])
        ystar = working_response(y_list[k], b)
        eta = fitted[k] + Z_list[k] @ params.phi[k]
        total += (
            ystar @ eta
            - 0.5 * CURVATURE * (eta @ eta)
            - 0.5 * CURVATURE * (var[k] @ xtx_list[k])
            - np.sum(c)
        )
    total -= group_kl(state.group_post, prior_vector(params))
    total += slab_term(inc, state.mu, state.s_sq, params.sigma_beta_sq)
    return float(total)


def elbo_binary(datasets, state: VariationalState, params: ModelParams) -> float:
    """Surrogate lower bound of the case-control model."""
    X = [d.genotypes for d in datasets]
    m = state.effects()
    fitted = [X[k] @ m[k] for k in range(len(X))]
    xtx = [np.einsum("ij,ij->j", x, x) for x in X]
    val = _binary_bound([d.phenotype for d in datasets], [d.covariates for d in datasets], xtx, fitted, state, params)
    if not np.isfinite(val):
        raise NumericalError("non-finite lower bound")
    return val


def _fit(datasets, config, independent, warm_start, order):
    K = len(datasets)
    _check_inputs(datasets, BINARY)
    config = config or FitConfig()
    X = [np.asfortranarray(d.genotypes, dtype=np.float64) for d in datasets]
    y = [np.ascontiguousarray(d.phenotype, dtype=np.float64) for d in datasets]
    covs = [_Covariates(d.covariates) for d in datasets]
    Z = [c.Z for c in covs]
    xtx = [np.einsum("ij,ij->j", x, x) for x in X]
    p = X[0].shape[1]
    order = np.arange(p, dtype=np.int64) if order is None else np.asarray(order, dtype=np.int64)

    if warm_start is not None:
        state = warm_start.state.copy()
        params = warm_start.params
        if independent and params.group_probs is not None:
            gp = params.group_probs
            params = ModelParams(
                sigma_beta_sq=params.sigma_beta_sq,
                phi=params.phi,
                group_probs=GroupProbs.from_array(
                    np.clip(GroupProbs.independent(gp.trait1, gp.trait2).as_array(), PRIOR_FLOOR, 1)
                ),
            )
    else:
        gp = config.init_group_probs
        prior = {"group_probs": gp} if K == 2 else {"inclusion_prob": gp.trait1}
        params = ModelParams(
            sigma_beta_sq=tuple(config.init_sigma_beta_sq)[:K],
            phi=tuple(np.zeros(z.shape[1]) for z in Z),
            **prior,
        )
        state = init_state(p, [x.shape[0] for x in X], params)
        state.psi = [np.zeros(x.shape[0]) for x in X]

    def bound():
        return _binary_bound(y, Z, xtx, state.fitted, state, params)

    t0 = time.perf_counter()
    m = state.effects()
    state.fitted = [X[k] @ m[k] for k in range(K)]
    trace = [_check_finite(bound(), "lower bound", 0)]
    converged = False
    it = 0
    for it in range(1, int(config.max_iter) + 1):
        ystar = [working_response(y[k], bohning_coefficients(state.psi[k])[0]) for k in range(K)]
        target = [ystar[k] / CURVATURE - Z[k] @ params.phi[k] for k in range(K)]
        sb = params.sigma_beta_sq
        logp = log_prior_of(params)
        if K == 2:
            bad = _sweep.sweep_joint(
                X[0], X[1], target[0], target[1], CURVATURE, CURVATURE, xtx[0], xtx[1], sb[0], sb[1],
                logp, state.mu, state.s_sq, state.group_post, state.fitted[0], state.fitted[1], order,
            )
        else:
            bad = _sweep.sweep_single(
                X[0], target[0], CURVATURE, xtx[0], sb[0], logp,
                state.mu, state.s_sq, state.group_post, state.fitted[0], order,
            )
        if bad >= 0:
            raise NumericalError(f"non-finite group log-weights for SNP {bad} at iteration {it}")
        m = state.effects()
        state.fitted = [X[k] @ m[k] for k in range(K)]
        inc = state.inclusion()
        sigma_b = update_slab_variance(inc, state.mu, state.s_sq, params.sigma_beta_sq)
        prior = update_group_probs(state.group_post, independent)
        phi = tuple(update_covariates(covs[k], ystar[k], state.fitted[k]) for k in range(K))
        params = ModelParams(sigma_beta_sq=sigma_b, phi=phi, **_prior_kw(prior))
        state.psi = [update_psi(y[k], state.fitted[k], Z[k], phi[k]) for k in range(K)]
        val = _check_finite(bound(), "lower bound", it)
        trace.append(val)
        if abs(val - trace[-2]) <= config.rel_tol * abs(val):
            converged = True
            break
    if not converged:
        logger.warning("binary VBEM did not converge in %d iterations", config.max_iter)
    return FitResult(
        params=params,
        state=state,
        elbo_trace=np.array(trace),
        iterations=it,
        converged=converged,
        lfdr=lfdr_matrix(state.group_post),
        wall_time=time.perf_counter() - t0,
    )


def fit_joint_binary(d1: GwasDataset, d2: GwasDataset, config: FitConfig | None = None, *,
                     independent: bool = False, warm_start: FitResult | None = None, order=None) -> FitResult:
    """Fit the four-groups model to two centered, aligned case-control studies."""
    return _fit([d1, d2], config, independent, warm_start, order)


def fit_single_binary(d: GwasDataset, config: FitConfig | None = None, *,
                      warm_start: FitResult | None = None, order=None) -> FitResult:
    return _fit([d], config, False, warm_start, order)
