"""Post-fit statistics: lfdr, global FDR selection, prediction, pleiotropy LRT."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, expit

from .data import BINARY, QUANT, TRAIT_GROUPS, FitConfig, FitResult, ModelParams


@dataclass
class SelectionResult:
    selected: np.ndarray
    zeta: float
    estimated_fdr: float

    def __len__(self):
        return len(self.selected)


@dataclass
class PleiotropyTest:
    lambda_: float
    p_value: float
    alt_params: ModelParams
    null_params: ModelParams
    alt_elbo: float
    null_elbo: float
    alt_converged: bool = True
    null_converged: bool = True
    alt_fit: FitResult | None = field(default=None, repr=False)
    null_fit: FitResult | None = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.alt_converged and self.null_converged

    def to_dict(self) -> dict:
        return {
            "lambda": float(self.lambda_),
            "p_value": float(self.p_value),
            "alpha_hat": self.alt_params.group_probs.as_array().tolist(),
            "alpha_hat_null": self.null_params.group_probs.as_array().tolist(),
            "alt_elbo": float(self.alt_elbo),
            "null_elbo": float(self.null_elbo),
            "alt_converged": bool(self.alt_converged),
            "null_converged": bool(self.null_converged),
        }


def lfdr(group_post_row, trait: int) -> float:
    """1 minus the posterior inclusion mass of ``trait`` (1 or 2) for one SNP.

    ``group_post_row`` is ordered (00, 01, 10, 11).
    """
    row = np.asarray(group_post_row, dtype=float)
    return float(1.0 - row[list(TRAIT_GROUPS[trait - 1])].sum())


def fdr_select(lfdrs, tau: float = 0.2) -> SelectionResult:
    """Largest lfdr threshold whose selected set has mean lfdr <= tau.

    SNPs tied at the threshold enter or leave together, so the estimated
    FDR never exceeds ``tau``.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    v = np.asarray(lfdrs, dtype=float)
    if v.size == 0:
        return SelectionResult(np.array([], dtype=int), 0.0, 0.0)
    order = np.argsort(v, kind="stable")
    sv = v[order]
    means = np.cumsum(sv) / np.arange(1, sv.size + 1)
    # candidate cut points: last position of each run of equal values
    ends = np.flatnonzero(np.append(sv[1:] != sv[:-1], True))
    ok = ends[means[ends] <= tau]
    if ok.size == 0:
        return SelectionResult(np.array([], dtype=int), 0.0, 0.0)
    last = ok[-1]
    return SelectionResult(np.sort(order[: last + 1]), float(sv[last]), float(means[last]))


def posterior_effects(fit: FitResult, trait: int) -> np.ndarray:
    eff = fit.state.effects()
    return eff[trait - 1] if eff.shape[0] > 1 else eff[0]


def genetic_score(x_new, effects, column_means):
    """sum_j (x_j - c_j) m_j for raw genotype row(s)."""
    x = np.asarray(x_new, dtype=float)
    m = np.asarray(effects, dtype=float)
    if x.shape[-1] != m.shape[0]:
        raise ValueError(f"genotype length {x.shape[-1]} does not match {m.shape[0]} SNPs")
    return (x - np.asarray(column_means, dtype=float)) @ m


def covariate_score(z_new, phi):
    z = np.asarray(z_new, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if z.shape[-1] != phi.shape[0]:
        raise ValueError(f"covariate length {z.shape[-1]} does not match {phi.shape[0]} coefficients")
    return z @ phi


def predict_quant(x_new, fit: FitResult, trait: int, column_means, phenotype_mean: float):
    """Predicted phenotype(s) for raw genotype row(s) ``x_new``."""
    return phenotype_mean + genetic_score(x_new, posterior_effects(fit, trait), column_means)


def predict_binary(x_new, z_new, fit: FitResult, trait: int, column_means):
    """Linear predictor and case probability for raw genotype row(s)."""
    k = trait - 1 if len(fit.params.phi) > 1 else 0
    eta = covariate_score(z_new, fit.params.phi[k])
    eta = eta + genetic_score(x_new, posterior_effects(fit, trait), column_means)
    return eta, expit(eta)


def chisq1_survival(x: float) -> float:
    """Upper tail of the chi-square distribution with one degree of freedom."""
    if isinstance(x, float) and math.isnan(x):
        raise ValueError("statistic is NaN")
    if x < 0:
        raise ValueError("chi-square statistic must be nonnegative")
    return float(erfc(math.sqrt(x / 2.0)))


def lrt_pvalue(lam: float) -> float:
    """p-value of a likelihood-ratio statistic; negative values map to 1."""
    return chisq1_survival(max(float(lam), 0.0))


def pleiotropy_lrt(d1, d2, config: FitConfig | None = None, family: str = QUANT,
                   alt_fit: FitResult | None = None) -> PleiotropyTest:
    """Test H0: alpha_11 = alpha_1* alpha_*1 by comparing converged lower bounds.

    The null fit is warm-started from the unconstrained fit.
    """
    if family == QUANT:
        from .quant import fit_joint_quant as fit
    elif family == BINARY:
        from .binary import fit_joint_binary as fit
    else:
        raise ValueError(f"unknown family {family!r}")
    if alt_fit is None:
        alt_fit = fit(d1, d2, config)
    null_fit = fit(d1, d2, config, independent=True, warm_start=alt_fit)
    lam = 2.0 * (alt_fit.elbo - null_fit.elbo)
    return PleiotropyTest(
        lambda_=lam,
        p_value=lrt_pvalue(lam),
        alt_params=alt_fit.params,
        null_params=null_fit.params,
        alt_elbo=alt_fit.elbo,
        null_elbo=null_fit.elbo,
        alt_converged=alt_fit.converged,
        null_converged=null_fit.converged,
        alt_fit=alt_fit,
        null_fit=null_fit,
    )
