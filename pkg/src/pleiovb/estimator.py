"""scikit-learn style front end to the VBEM solvers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .binary import fit_joint_binary, fit_single_binary
from .data import BINARY, QUANT, FitConfig, GroupProbs, GwasDataset, center
from .inference import fdr_select, pleiotropy_lrt, predict_binary, predict_quant
from .quant import fit_joint_quant, fit_single_quant


def _labels_pm1(y):
    vals = set(np.unique(y).tolist())
    if vals <= {0.0, 1.0}:
        return 2.0 * y - 1.0
    if vals <= {-1.0, 1.0}:
        return y.astype(float)
    raise ValueError(f"binary targets must be 0/1 or -1/+1, got {sorted(vals)[:5]}")


def _as_dataset(X, y, Z, family, tag):
    X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
    if family == BINARY:
        y = _labels_pm1(y)
    if Z is not None:
        Z = check_array(Z, dtype=np.float64, ensure_2d=False)
    snps = [f"snp{j + 1}" for j in range(X.shape[1])]
    samples = [f"{tag}_{i + 1}" for i in range(X.shape[0])]
    return GwasDataset(X, y, snps, samples, family=family, covariates=Z)


class _Base(BaseEstimator):
    def _config(self):
        return FitConfig(
            max_iter=self.max_iter,
            rel_tol=self.rel_tol,
            init_group_probs=GroupProbs(*self.init_group_probs),
            init_sigma_beta_sq=tuple(self.init_sigma_beta_sq),
        )

    def _check_family(self):
        if self.family not in (QUANT, BINARY):
            raise ValueError(f"family must be 'quant' or 'binary', got {self.family!r}")

    def _covariates(self, X, Z, trait):
        if Z is None:
            Z = np.ones((X.shape[0], 1))
        Z = check_array(Z, dtype=np.float64, ensure_2d=False)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[1] == self.n_covariates_[trait - 1] - 1:
            Z = np.column_stack([np.ones(X.shape[0]), Z])
        return Z

    def decision_function(self, X, Z=None, trait: int = 1):
        """Predicted phenotype (quantitative) or linear predictor (binary)."""
        check_is_fitted(self, "result_")
        X = check_array(X, dtype=np.float64)
        fit, k = self._fit_for(trait)
        means = self.column_means_[trait - 1]
        if self.family == QUANT:
            return predict_quant(X, fit, k, means, self.phenotype_mean_[trait - 1])
        eta, _ = predict_binary(X, self._covariates(X, Z, trait), fit, k, means)
        return eta

    def predict(self, X, Z=None, trait: int = 1):
        """Predicted phenotype, or class labels in {-1, +1} for binary traits."""
        score = self.decision_function(X, Z, trait)
        if self.family == QUANT:
            return score
        return np.where(score > 0, 1.0, -1.0)

    def predict_proba(self, X, Z=None, trait: int = 1):
        if self.family != BINARY:
            raise AttributeError("predict_proba is only available for binary traits")
        check_is_fitted(self, "result_")
        X = check_array(X, dtype=np.float64)
        fit, k = self._fit_for(trait)
        _, prob = predict_binary(X, self._covariates(X, Z, trait), fit, k, self.column_means_[trait - 1])
        return np.column_stack([1.0 - prob, prob])

    def select(self, tau: float | None = None, trait: int = 1):
        """SNPs selected at global FDR ``tau`` (defaults to the estimator's tau)."""
        check_is_fitted(self, "result_")
        return fdr_select(self.lfdr_[trait - 1], self.tau if tau is None else tau)


class FourGroupsVB(_Base):
    """Joint spike-slab model for two studies sharing a SNP panel.

    Parameters
    ----------
    family : {"quant", "binary"}
    max_iter, rel_tol : stopping rule on the relative change of the bound.
    init_group_probs : initial (a00, a01, a10, a11).
    init_sigma_beta_sq : initial slab variances of the two traits.
    tau : global FDR level used by :meth:`select`.

    Attributes
    ----------
    result_ : FitResult
    coef_ : ndarray of shape (2, p), posterior mean effects
    lfdr_ : ndarray of shape (2, p)
    group_probs_ : GroupProbs
    """

    def __init__(self, family="quant", max_iter=1000, rel_tol=1e-5,
                 init_group_probs=(0.97, 0.01, 0.01, 0.01), init_sigma_beta_sq=(1.0, 1.0), tau=0.2):
        self.family = family
        self.max_iter = max_iter
        self.rel_tol = rel_tol
        self.init_group_probs = init_group_probs
        self.init_sigma_beta_sq = init_sigma_beta_sq
        self.tau = tau

    def fit(self, X1, y1, X2, y2, Z1=None, Z2=None):
        self._check_family()
        raw = [_as_dataset(X1, y1, Z1, self.family, "s1"), _as_dataset(X2, y2, Z2, self.family, "s2")]
        if raw[0].p != raw[1].p:
            raise ValueError(f"studies have {raw[0].p} and {raw[1].p} SNPs")
        self.datasets_ = [center(d) for d in raw]
        fit = fit_joint_quant if self.family == QUANT else fit_joint_binary
        self.result_ = fit(*self.datasets_, self._config())
        self._store()
        return self

    def _store(self):
        r = self.result_
        self.coef_ = r.state.effects()
        self.lfdr_ = r.lfdr
        self.group_probs_ = r.params.group_probs
        self.n_iter_ = r.iterations
        self.converged_ = r.converged
        self.column_means_ = [d.column_means for d in self.datasets_]
        self.phenotype_mean_ = [d.phenotype_mean for d in self.datasets_]
        self.n_covariates_ = [0 if d.covariates is None else d.covariates.shape[1] for d in self.datasets_]
        self.n_features_in_ = self.coef_.shape[1]

    def _fit_for(self, trait):
        if trait not in (1, 2):
            raise ValueError("trait must be 1 or 2")
        return self.result_, trait

    def test_pleiotropy(self):
        """Likelihood-ratio test of independent group membership across traits."""
        check_is_fitted(self, "result_")
        return pleiotropy_lrt(*self.datasets_, self._config(), family=self.family, alt_fit=self.result_)


class TwoGroupsVB(_Base):
    """Single-study spike-slab model (the no-pleiotropy baseline)."""

    def __init__(self, family="quant", max_iter=1000, rel_tol=1e-5,
                 init_inclusion_prob=0.02, init_sigma_beta_sq=1.0, tau=0.2):
        self.family = family
        self.max_iter = max_iter
        self.rel_tol = rel_tol
        self.init_inclusion_prob = init_inclusion_prob
        self.init_sigma_beta_sq = init_sigma_beta_sq
        self.tau = tau

    def _config(self):
        pi = float(self.init_inclusion_prob)
        return FitConfig(
            max_iter=self.max_iter,
            rel_tol=self.rel_tol,
            init_group_probs=GroupProbs(1.0 - pi, 0.0, pi, 0.0),
            init_sigma_beta_sq=(float(self.init_sigma_beta_sq),),
        )

    def fit(self, X, y, Z=None):
        self._check_family()
        self.datasets_ = [center(_as_dataset(X, y, Z, self.family, "s1"))]
        fit = fit_single_quant if self.family == QUANT else fit_single_binary
        self.result_ = fit(self.datasets_[0], self._config())
        r = self.result_
        self.coef_ = r.state.effects()[0]
        self.lfdr_ = r.lfdr
        self.inclusion_prob_ = r.params.inclusion_prob
        self.n_iter_ = r.iterations
        self.converged_ = r.converged
        d = self.datasets_[0]
        self.column_means_ = [d.column_means]
        self.phenotype_mean_ = [d.phenotype_mean]
        self.n_covariates_ = [0 if d.covariates is None else d.covariates.shape[1]]
        self.n_features_in_ = self.coef_.shape[0]
        return self

    def _fit_for(self, trait):
        if trait != 1:
            raise ValueError("a single-study model has only trait 1")
        return self.result_, 1
