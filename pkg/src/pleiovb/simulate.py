"""Synthetic paired GWAS with known association status.

Genotypes come from AR(1) latent normals cut at Hardy-Weinberg quantiles;
two traits share a controllable fraction of their causal SNPs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm

from .data import BINARY, QUANT, DataError, GwasDataset


@dataclass
class SimConfig:
    n: int = 3000
    n_test: int = 500
    p: int = 20000
    rho: float = 0.5
    maf_low: float = 0.05
    maf_high: float = 0.5
    alpha1: float = 0.005
    g: float = 0.0
    h_sq: float = 0.5
    family: str = QUANT
    prevalence: float = 0.1
    case_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.family not in (QUANT, BINARY):
            raise ValueError(f"unknown family {self.family!r}")
        if not 0 < self.alpha1 < 1:
            raise ValueError("alpha1 must lie in (0, 1)")
        if not 0 <= self.g <= 1:
            raise ValueError("g must lie in [0, 1]")
        if not 0 < self.h_sq < 1:
            raise ValueError("h_sq must lie in (0, 1)")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if not 0 < self.maf_low <= self.maf_high <= 0.5:
            raise ValueError("MAF range must be inside (0, 0.5]")
        if self.n < 1 or self.p < 1 or self.n_test < 0:
            raise ValueError("n and p must be positive, n_test nonnegative")
        if self.family == BINARY:
            if not 0 < self.prevalence < 1 or not 0 < self.case_ratio < 1:
                raise ValueError("prevalence and case_ratio must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimTruth:
    gamma: np.ndarray  # (p, 2) 0/1
    beta: np.ndarray  # (p, 2)
    sigma_e_sq: tuple
    threshold: tuple | None = None
    maf: np.ndarray | None = None


@dataclass
class SimulatedPair:
    train: tuple
    test: tuple
    truth: SimTruth
    config: SimConfig


def replicate_rng(seed: int, replicate: int = 0) -> np.random.Generator:
    """Independent stream per (seed, replicate)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(replicate)]))


def _latent_ar1(n, p, rho, rng):
    # generated SNP-major so the recursion runs over contiguous rows
    z = rng.standard_normal((p, n))
    scale = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        z[j] *= scale
        z[j] += rho * z[j - 1]
    return z.T


def discretize(latent, maf):
    """Cut standard normals so P(2) = f^2, P(1) = 2f(1-f), P(0) = (1-f)^2."""
    maf = np.asarray(maf, dtype=float)
    lo = norm.ppf((1.0 - maf) ** 2)
    hi = norm.ppf(1.0 - maf**2)
    return (latent > lo).astype(np.int8) + (latent > hi).astype(np.int8)


def gen_genotypes(n, p, rho, maf_low, maf_high, rng, maf=None):
    """Return an (n, p) int8 genotype matrix and the per-SNP MAFs used."""
    if maf is None:
        maf = rng.uniform(maf_low, maf_high, size=p)
    return discretize(_latent_ar1(n, p, rho, rng), maf), np.asarray(maf)


def support_sizes(p, alpha1, g):
    """Per-trait and shared causal counts (round half to even)."""
    k = int(round(p * alpha1))
    s = int(round(p * alpha1 * (alpha1 + g * (1.0 - alpha1))))
    return k, s


def gen_association(p, alpha1, g, rng):
    k, s = support_sizes(p, alpha1, g)
    if s > k or k > p or 2 * k - s > p:
        raise ValueError(f"infeasible support sizes: per-trait {k}, shared {s}, p {p}")
    gamma1 = np.zeros(p, dtype=np.int8)
    gamma2 = np.zeros(p, dtype=np.int8)
    support1 = rng.choice(p, size=k, replace=False)
    gamma1[support1] = 1
    shared = rng.choice(support1, size=s, replace=False)
    gamma2[shared] = 1
    rest = rng.choice(np.flatnonzero(gamma1 == 0), size=k - s, replace=False)
    gamma2[rest] = 1
    return gamma1, gamma2


def noise_variance(genetic, h_sq):
    var_g = float(np.var(genetic))
    if var_g <= 0:
        raise ValueError("genetic value has zero variance (empty causal support?)")
    return var_g * (1.0 - h_sq) / h_sq


def gen_quant_phenotype(X, gamma, beta, h_sq, rng):
    G = np.asarray(X, dtype=float) @ (np.asarray(gamma) * np.asarray(beta))
    se = noise_variance(G, h_sq)
    return G + rng.normal(0.0, math.sqrt(se), size=G.shape[0]), se


def pool_size(n, case_ratio, prevalence):
    return int(math.ceil(n * case_ratio / prevalence)) * 2


def gen_binary_phenotype(X_pool, gamma, beta, h_sq, prevalence, case_ratio, n, rng):
    """Liability-threshold case-control sample drawn from a population pool.

    Returns labels in {-1, +1}, the selected pool rows, the threshold and the
    liability noise variance.
    """
    G = np.asarray(X_pool, dtype=float) @ (np.asarray(gamma) * np.asarray(beta))
    se = noise_variance(G, h_sq)
    L = G + rng.normal(0.0, math.sqrt(se), size=G.shape[0])
    t = float(np.quantile(L, 1.0 - prevalence))
    cases = np.flatnonzero(L > t)
    controls = np.flatnonzero(L <= t)
    n_case = int(round(n * case_ratio))
    n_ctrl = n - n_case
    if cases.size < n_case or controls.size < n_ctrl:
        raise ValueError(
            f"pool has {cases.size} cases / {controls.size} controls, need {n_case} / {n_ctrl}; "
            "increase the pool factor"
        )
    rows = np.concatenate([rng.choice(cases, n_case, replace=False), rng.choice(controls, n_ctrl, replace=False)])
    rows = rng.permutation(rows)
    y = np.where(L[rows] > t, 1.0, -1.0)
    return y, rows, t, se


def _balanced_split(rows, y, n_train, case_ratio, rng):
    """Reorder so the first ``n_train`` rows hold round(n_train * case_ratio) cases."""
    cases, controls = rows[y > 0], rows[y < 0]
    n_case = int(round(n_train * case_ratio))
    train = rng.permutation(np.concatenate([cases[:n_case], controls[: n_train - n_case]]))
    test = rng.permutation(np.concatenate([cases[n_case:], controls[n_train - n_case:]]))
    out = np.concatenate([train, test])
    return out, np.where(np.isin(out, cases), 1.0, -1.0)


def snp_labels(p):
    return [f"snp{j + 1}" for j in range(p)]


def _study(prefix, X, y, snp_ids, family, offset=0):
    ids = [f"{prefix}_{i + 1 + offset}" for i in range(X.shape[0])]
    Z = np.ones((X.shape[0], 1)) if family == BINARY else None
    return GwasDataset(X.astype(float), y, snp_ids, ids, family=family, covariates=Z)


def simulate_pair(config: SimConfig, replicate: int = 0) -> SimulatedPair:
    """Two studies (train and test splits each) plus the ground truth."""
    rng = replicate_rng(config.seed, replicate)
    p = config.p
    maf = rng.uniform(config.maf_low, config.maf_high, size=p)
    gamma = np.column_stack(gen_association(p, config.alpha1, config.g, rng))
    beta = rng.standard_normal((p, 2)) * gamma
    snp_ids = snp_labels(p)
    total = config.n + config.n_test
    train, test, sig, thr = [], [], [], []
    for k in range(2):
        if config.family == QUANT:
            X, _ = gen_genotypes(total, p, config.rho, config.maf_low, config.maf_high, rng, maf=maf)
            y, se = gen_quant_phenotype(X, gamma[:, k], beta[:, k], config.h_sq, rng)
        else:
            m = pool_size(total, config.case_ratio, config.prevalence)
            Xp, _ = gen_genotypes(m, p, config.rho, config.maf_low, config.maf_high, rng, maf=maf)
            y, rows, t, se = gen_binary_phenotype(
                Xp, gamma[:, k], beta[:, k], config.h_sq, config.prevalence, config.case_ratio, total, rng
            )
            rows, y = _balanced_split(rows, y, config.n, config.case_ratio, rng)
            X = Xp[rows]
            thr.append(t)
        sig.append(se)
        tag = f"s{k + 1}"
        train.append(_study(tag, X[: config.n], y[: config.n], snp_ids, config.family))
        test.append(_study(tag, X[config.n:], y[config.n:], snp_ids, config.family, offset=config.n))
    truth = SimTruth(gamma=gamma, beta=beta, sigma_e_sq=tuple(sig), threshold=tuple(thr) if thr else None, maf=maf)
    return SimulatedPair(tuple(train), tuple(test), truth, config)


def write_truth(path, truth: SimTruth, snp_ids) -> None:
    with open(path, "w") as fh:
        fh.write("snp_id\tgamma1\tgamma2\tbeta1\tbeta2\n")
        for j, sid in enumerate(snp_ids):
            g1, g2 = truth.gamma[j]
            b1, b2 = truth.beta[j]
            fh.write(f"{sid}\t{int(g1)}\t{int(g2)}\t{float(b1)!r}\t{float(b2)!r}\n")


def read_truth(path):
    import csv

    with open(path) as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    if not rows:
        raise DataError(f"{path}: empty truth file")
    ids = [r["snp_id"] for r in rows]
    gamma = np.array([[int(r["gamma1"]), int(r["gamma2"])] for r in rows])
    beta = np.array([[float(r["beta1"]), float(r["beta2"])] for r in rows])
    return ids, gamma, beta
