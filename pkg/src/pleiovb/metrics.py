"""Scores for variant identification and phenotype prediction."""

import numpy as np
from scipy.stats import rankdata

from .inference import fdr_select


def auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney U statistic (ties count 1/2)."""
    s = np.asarray(scores, dtype=float)
    lab = np.asarray(labels)
    if s.shape != lab.shape:
        raise ValueError("scores and labels must have the same shape")
    pos = lab > 0
    n_pos = int(pos.sum())
    n_neg = lab.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative labels")
    ranks = rankdata(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def power_at_fdr(lfdrs, truth, tau: float = 0.2) -> float:
    """Fraction of true signals selected at global FDR ``tau``; NaN without true signals."""
    truth = np.asarray(truth).astype(bool)
    n_true = int(truth.sum())
    if n_true == 0:
        return float("nan")
    sel = fdr_select(lfdrs, tau).selected
    return float(truth[sel].sum() / n_true)


def empirical_fdr(selected, truth) -> float:
    """Share of selected SNPs that are null; 0 for an empty selection."""
    selected = np.asarray(selected, dtype=int)
    if selected.size == 0:
        return 0.0
    truth = np.asarray(truth).astype(bool)
    return float((~truth[selected]).sum() / selected.size)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("inputs must have the same shape")
    da = a - a.mean()
    db = b - b.mean()
    na, nb = np.sqrt(da @ da), np.sqrt(db @ db)
    if na == 0 or nb == 0:
        raise ValueError("correlation undefined for a constant vector")
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))
