import itertools

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from pleiovb.data import BINARY, QUANT, GwasDataset, center


def random_genotypes(rng, n, p):
    X = rng.integers(0, 3, size=(n, p)).astype(float)
    # avoid constant columns, which centering turns into zeros
    for j in range(p):
        if np.ptp(X[:, j]) == 0:
            X[0, j] = (X[0, j] + 1) % 3
    return X


def quant_dataset(rng, n, p, n_causal=2, effect=0.5, noise=1.0, X=None, tag="s"):
    X = random_genotypes(rng, n, p) if X is None else X
    beta = np.zeros(p)
    if n_causal:
        beta[rng.choice(p, n_causal, replace=False)] = effect * rng.standard_normal(n_causal)
    y = X @ beta + noise * rng.standard_normal(n)
    d = GwasDataset(X, y, [f"snp{j + 1}" for j in range(p)], [f"{tag}{i}" for i in range(n)], family=QUANT)
    return center(d)


def quant_pair(seed, n=80, p=6, **kw):
    rng = np.random.default_rng(seed)
    return quant_dataset(rng, n, p, tag="a", **kw), quant_dataset(rng, n, p, tag="b", **kw)


def binary_dataset(rng, n, p, n_causal=2, effect=1.0, covariate=False, tag="s"):
    X = random_genotypes(rng, n, p)
    beta = np.zeros(p)
    beta[rng.choice(p, n_causal, replace=False)] = effect * rng.standard_normal(n_causal)
    eta = (X - X.mean(0)) @ beta
    y = np.where(rng.random(n) < 1 / (1 + np.exp(-eta)), 1.0, -1.0)
    if np.all(y == y[0]):
        y[0] = -y[0]
    Z = rng.standard_normal((n, 1)) if covariate else None
    d = GwasDataset(X, y, [f"snp{j + 1}" for j in range(p)], [f"{tag}{i}" for i in range(n)],
                    family=BINARY, covariates=Z)
    return center(d)


def binary_pair(seed, n=150, p=20, **kw):
    rng = np.random.default_rng(seed)
    return binary_dataset(rng, n, p, tag="a", **kw), binary_dataset(rng, n, p, tag="b", **kw)


def trait_log_evidence(X, y, sigma_beta_sq, sigma_e_sq):
    """log N(y; 0, sb X_g X_g' + se I) for every subset g, indexed by bitmask."""
    n, p = X.shape
    out = np.empty(2**p)
    for mask in range(2**p):
        cols = [j for j in range(p) if mask >> j & 1]
        Xg = X[:, cols]
        cov = sigma_beta_sq * Xg @ Xg.T + sigma_e_sq * np.eye(n)
        out[mask] = multivariate_normal(np.zeros(n), cov).logpdf(y)
    return out


def exact_log_evidence(datasets, params):
    """log sum over all 4^p (gamma1, gamma2) of prior times both marginal likelihoods."""
    d1, d2 = datasets
    p = d1.p
    l1 = trait_log_evidence(d1.genotypes, d1.phenotype, params.sigma_beta_sq[0], params.sigma_e_sq[0])
    l2 = trait_log_evidence(d2.genotypes, d2.phenotype, params.sigma_beta_sq[1], params.sigma_e_sq[1])
    log_a = np.log(params.group_probs.as_array())
    bits = np.array([[m >> j & 1 for j in range(p)] for m in range(2**p)])
    # log prior of (g1, g2): sum_j log alpha[2 g1j + g2j]
    lp = np.zeros((2**p, 2**p))
    for j in range(p):
        lp += log_a[2 * bits[:, j][:, None] + bits[:, j][None, :]]
    total = lp + l1[:, None] + l2[None, :]
    m = total.max()
    return float(m + np.log(np.exp(total - m).sum()))


def all_masks(p):
    return list(itertools.product((0, 1), repeat=p))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
