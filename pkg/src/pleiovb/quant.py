"""Variational Bayes EM for quantitative traits.

The joint solver fits the four-groups spike-slab model to two studies that
share a SNP panel; ``fit_single_quant`` is the two-groups reduction for one
study.  Both run coordinate ascent on the evidence lower bound with a
cached fitted value ``X_k m_k`` per trait.
"""

from __future__ import annotations

import logging
import time

import numpy as np
from scipy.special import xlogy

from . import _sweep
from .data import (
    QUANT,
    TRAIT_GROUPS,
    DataError,
    FitConfig,
    FitResult,
    GroupProbs,
    GwasDataset,
    ModelParams,
    NumericalError,
    VariationalState,
)

logger = logging.getLogger(__name__)

PRIOR_FLOOR = 1e-12
SLAB_MASS_FLOOR = 1e-12


class _Design:
    """Column-major genotype matrices and their column norms."""

    def __init__(self, datasets):
        self.X = [np.asfortranarray(d.genotypes, dtype=np.float64) for d in datasets]
        self.y = [np.ascontiguousarray(d.phenotype, dtype=np.float64) for d in datasets]
        self.xtx = [np.einsum("ij,ij->j", X, X) for X in self.X]
        self.n = [X.shape[0] for X in self.X]
        self.p = self.X[0].shape[1]


def _check_inputs(datasets, family=QUANT):
    for d in datasets:
        if not isinstance(d, GwasDataset):
            raise TypeError("expected GwasDataset inputs")
        if d.family != family:
            raise DataError(f"expected {family} data, got {d.family}")
        if not d.centered:
            raise DataError("datasets must be centered before fitting")
    if len(datasets) == 2 and list(datasets[0].snp_ids) != list(datasets[1].snp_ids):
        raise DataError("datasets are not aligned to a common SNP order")


# -- pieces shared with the binary solver ----------------------------------


def prior_vector(params: ModelParams) -> np.ndarray:
    if params.group_probs is not None:
        return params.group_probs.as_array()
    return np.array([1.0 - params.inclusion_prob, params.inclusion_prob])


def inclusion_from_post(post: np.ndarray) -> np.ndarray:
    if post.shape[1] == 2:
        return post[:, 1][None, :]
    return np.vstack([post[:, list(c)].sum(axis=1) for c in TRAIT_GROUPS])


def effect_variance(inc, mu, s_sq):
    """Var[gamma * beta] under the variational posterior."""
    return inc * (mu**2 + s_sq) - inc**2 * mu**2


def group_kl(post: np.ndarray, prior: np.ndarray) -> float:
    """sum_j KL(post_j || prior) with 0 log 0 = 0."""
    return float(np.sum(xlogy(post, post)) - np.sum(post * np.log(prior)))


def slab_term(inc, mu, s_sq, sigma_beta_sq) -> float:
    sb = np.asarray(sigma_beta_sq, dtype=float)[:, None]
    return 0.5 * float(np.sum(inc * (np.log(s_sq / sb) - (mu**2 + s_sq) / sb + 1.0)))


def update_group_probs(post: np.ndarray, independent: bool = False):
    """Prior update: group posteriors averaged over SNPs, clamped away from 0.

    With ``independent`` the four-groups prior is restricted to the product
    of its two marginals.
    """
    if post.shape[1] == 2:
        pi = float(np.clip(post[:, 1].mean(), PRIOR_FLOOR, 1.0 - PRIOR_FLOOR))
        return pi
    if independent:
        inc = inclusion_from_post(post).mean(axis=1)
        a = GroupProbs.independent(inc[0], inc[1]).as_array()
    else:
        a = post.mean(axis=0)
    a = np.clip(a, PRIOR_FLOOR, 1.0)
    return GroupProbs.from_array(a)


def update_slab_variance(inc, mu, s_sq, current):
    out = []
    for k in range(inc.shape[0]):
        mass = inc[k].sum()
        if mass < SLAB_MASS_FLOOR:
            out.append(float(current[k]))
        else:
            out.append(float(np.sum(inc[k] * (mu[k] ** 2 + s_sq[k])) / mass))
    return tuple(out)


def log_prior_of(params: ModelParams) -> np.ndarray:
    return np.log(prior_vector(params))


def lfdr_matrix(post: np.ndarray) -> np.ndarray:
    return np.clip(1.0 - inclusion_from_post(post), 0.0, 1.0)


def init_state(p, n_list, params: ModelParams) -> VariationalState:
    K = params.n_traits
    prior = prior_vector(params)
    return VariationalState(
        mu=np.zeros((K, p)),
        s_sq=np.tile(np.asarray(params.sigma_beta_sq, dtype=float)[:, None], (1, p)),
        group_post=np.tile(prior, (p, 1)),
        fitted=[np.zeros(n) for n in n_list],
    )


def _check_finite(value, what, iteration):
    if not np.isfinite(value):
        raise NumericalError(f"non-finite {what} at iteration {iteration}")
    return value


# -- single-coordinate reference updates -----------------------------------


def update_effect_posterior(j: int, k: int, datasets, state: VariationalState, params: ModelParams):
    """Closed-form (mu_kj, s2_kj) given every other SNP's current posterior."""
    d = datasets[k]
    X, y = d.genotypes, d.phenotype
    x = X[:, j]
    m = state.effects()[k].copy()
    m[j] = 0.0
    xtx = float(x @ x)
    se, sb = params.sigma_e_sq[k], params.sigma_beta_sq[k]
    denom = xtx + se / sb
    mu = float(x @ y - x @ (X @ m)) / denom
    return mu, se / denom


def update_group_posterior(j: int, state: VariationalState, params: ModelParams) -> np.ndarray:
    """Posterior group probabilities of SNP j (softmax of the four log-weights)."""
    mu, s2 = state.mu[:, j], state.s_sq[:, j]
    sb = np.asarray(params.sigma_beta_sq, dtype=float)
    excluded = 0.5 * np.log(sb)
    included = 0.5 * np.log(s2) + mu**2 / (2.0 * s2)
    prior = np.log(prior_vector(params))
    if len(sb) == 1:
        A = prior + np.array([excluded[0], included[0]])
    else:
        A = prior + np.array(
            [
                excluded[0] + excluded[1],
                excluded[0] + included[1],
                included[0] + excluded[1],
                included[0] + included[1],
            ]
        )
    if not np.all(np.isfinite(A)):
        raise NumericalError(f"non-finite group log-weights for SNP {j}: {A}")
    w = np.exp(A - A.max())
    return np.maximum(w / w.sum(), _sweep.POST_FLOOR)


# -- M-step and bound --------------------------------------------------------


def m_step(datasets, state: VariationalState, params: ModelParams, independent: bool = False) -> ModelParams:
    """Closed-form maximisers of the bound over noise, slab and prior parameters."""
    inc = state.inclusion()
    m = inc * state.mu
    var = effect_variance(inc, state.mu, state.s_sq)
    sigma_e = []
    for k, d in enumerate(datasets):
        X, y = d.genotypes, d.phenotype
        r = y - X @ m[k]
        xtx = np.einsum("ij,ij->j", X, X)
        sigma_e.append(float((r @ r + var[k] @ xtx) / d.n))
    sigma_b = update_slab_variance(inc, state.mu, state.s_sq, params.sigma_beta_sq)
    prior = update_group_probs(state.group_post, independent)
    return ModelParams(sigma_beta_sq=sigma_b, sigma_e_sq=tuple(sigma_e), **_prior_kw(prior))


def _prior_kw(prior):
    if isinstance(prior, GroupProbs):
        return {"group_probs": prior}
    return {"inclusion_prob": prior}


def _quant_bound(y_list, X_list, xtx_list, fitted, state, params) -> float:
    inc = state.inclusion()
    var = effect_variance(inc, state.mu, state.s_sq)
    total = 0.0
    for k in range(len(y_list)):
        se = params.sigma_e_sq[k]
        r = y_list[k] - fitted[k]
        n = y_list[k].shape[0]
        total += -0.5 * n * np.log(2 * np.pi * se) - (r @ r + var[k] @ xtx_list[k]) / (2 * se)
    total -= group_kl(state.group_post, prior_vector(params))
    total += slab_term(inc, state.mu, state.s_sq, params.sigma_beta_sq)
    return float(total)


def elbo(datasets, state: VariationalState, params: ModelParams) -> float:
    """Evidence lower bound of the quantitative model at (state, params)."""
    X = [d.genotypes for d in datasets]
    y = [d.phenotype for d in datasets]
    xtx = [np.einsum("ij,ij->j", x, x) for x in X]
    m = state.effects()
    fitted = [X[k] @ m[k] for k in range(len(X))]
    val = _quant_bound(y, X, xtx, fitted, state, params)
    if not np.isfinite(val):
        raise NumericalError("non-finite lower bound")
    return val


# -- drivers ---------------------------------------------------------------


def _initial_params(design: _Design, config: FitConfig, K: int) -> ModelParams:
    if config.init_sigma_e_sq is None:
        se = tuple(float(np.var(y)) / 2.0 for y in design.y)
    else:
        se = tuple(float(v) for v in config.init_sigma_e_sq)[:K]
    se = tuple(v if v > 0 else 1.0 for v in se)
    gp = config.init_group_probs
    if K == 2:
        prior = {"group_probs": gp}
    else:
        prior = {"inclusion_prob": gp.trait1}
    return ModelParams(sigma_beta_sq=tuple(config.init_sigma_beta_sq)[:K], sigma_e_sq=se, **prior)


def _fit(datasets, config, independent, warm_start, order):
    K = len(datasets)
    _check_inputs(datasets)
    config = config or FitConfig()
    design = _Design(datasets)
    p = design.p
    order = np.arange(p, dtype=np.int64) if order is None else np.asarray(order, dtype=np.int64)
    if warm_start is not None:
        state = warm_start.state.copy()
        params = warm_start.params
        if independent and params.group_probs is not None:
            gp = params.group_probs
            params = ModelParams(
                sigma_beta_sq=params.sigma_beta_sq,
                sigma_e_sq=params.sigma_e_sq,
                group_probs=GroupProbs.from_array(
                    np.clip(GroupProbs.independent(gp.trait1, gp.trait2).as_array(), PRIOR_FLOOR, 1)
                ),
            )
    else:
        params = _initial_params(design, config, K)
        state = init_state(p, design.n, params)

    def bound():
        return _quant_bound(design.y, design.X, design.xtx, state.fitted, state, params)

    t0 = time.perf_counter()
    m = state.effects()
    state.fitted = [design.X[k] @ m[k] for k in range(K)]
    trace = [_check_finite(bound(), "lower bound", 0)]
    converged = False
    it = 0
    for it in range(1, int(config.max_iter) + 1):
        w = [1.0 / v for v in params.sigma_e_sq]
        sb = params.sigma_beta_sq
        logp = log_prior_of(params)
        if K == 2:
            bad = _sweep.sweep_joint(
                design.X[0], design.X[1], design.y[0], design.y[1], w[0], w[1],
                design.xtx[0], design.xtx[1], sb[0], sb[1], logp,
                state.mu, state.s_sq, state.group_post, state.fitted[0], state.fitted[1], order,
            )
        else:
            bad = _sweep.sweep_single(
                design.X[0], design.y[0], w[0], design.xtx[0], sb[0], logp,
                state.mu, state.s_sq, state.group_post, state.fitted[0], order,
            )
        if bad >= 0:
            raise NumericalError(f"non-finite group log-weights for SNP {bad} at iteration {it}")
        m = state.effects()
        state.fitted = [design.X[k] @ m[k] for k in range(K)]
        params = _m_step_cached(design, state, params, independent)
        val = _check_finite(bound(), "lower bound", it)
        trace.append(val)
        if abs(val - trace[-2]) <= config.rel_tol * abs(val):
            converged = True
            break
    if not converged:
        logger.warning("VBEM did not converge in %d iterations", config.max_iter)
    return FitResult(
        params=params,
        state=state,
        elbo_trace=np.array(trace),
        iterations=it,
        converged=converged,
        lfdr=lfdr_matrix(state.group_post),
        wall_time=time.perf_counter() - t0,
    )


def _m_step_cached(design, state, params, independent):
    inc = state.inclusion()
    var = effect_variance(inc, state.mu, state.s_sq)
    sigma_e = []
    for k in range(len(design.X)):
        r = design.y[k] - state.fitted[k]
        sigma_e.append(float((r @ r + var[k] @ design.xtx[k]) / design.n[k]))
    sigma_b = update_slab_variance(inc, state.mu, state.s_sq, params.sigma_beta_sq)
    prior = update_group_probs(state.group_post, independent)
    return ModelParams(sigma_beta_sq=sigma_b, sigma_e_sq=tuple(sigma_e), **_prior_kw(prior))


def fit_joint_quant(d1: GwasDataset, d2: GwasDataset, config: FitConfig | None = None, *,
                    independent: bool = False, warm_start: FitResult | None = None, order=None) -> FitResult:
    """Fit the four-groups model to two centered, aligned quantitative studies.

    Parameters
    ----------
    d1, d2 : GwasDataset
        Centered studies sharing the same SNP order.
    config : FitConfig, optional
        Stopping rule and initial values.
    independent : bool
        Restrict the group prior to the product of its marginals (the
        no-pleiotropy null used by the likelihood-ratio test).
    warm_start : FitResult, optional
        Start from this fit's variational state and parameters.
    order : array of int, optional
        SNP visiting order within a sweep (default ascending).
    """
    return _fit([d1, d2], config, independent, warm_start, order)


def fit_single_quant(d: GwasDataset, config: FitConfig | None = None, *,
                     warm_start: FitResult | None = None, order=None) -> FitResult:
    """Two-groups spike-slab fit of a single quantitative study."""
    return _fit([d], config, False, warm_start, order)
