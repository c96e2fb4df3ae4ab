"""Replicated simulation study: joint versus separate fits across pleiotropy levels."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .binary import fit_joint_binary, fit_single_binary
from .data import BINARY, QUANT, FitConfig, center
from .inference import fdr_select, pleiotropy_lrt, predict_binary, predict_quant
from .metrics import auc, empirical_fdr, pearson, power_at_fdr
from .quant import fit_joint_quant, fit_single_quant
from .simulate import SimConfig, simulate_pair

COLUMNS = ("g", "replicate", "method", "auc", "power", "fdr", "prediction")
METHODS = ("joint", "separate")


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("PLEIOVB_THREADS")
    n = requested if requested else 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


class _SeparateFit:
    """Two single-trait fits viewed through the joint-fit accessors."""

    def __init__(self, fits):
        self.fits = fits
        self.lfdr = np.vstack([f.lfdr for f in fits])
        self.converged = all(f.converged for f in fits)

    def effects(self, trait):
        return self.fits[trait - 1].state.effects()[0]


def _effects(fit, trait):
    if isinstance(fit, _SeparateFit):
        return fit.effects(trait)
    return fit.state.effects()[trait - 1]


def fit_pair(train, family, config: FitConfig | None = None):
    """Centered joint and separate fits of a training pair."""
    c = [center(d) for d in train]
    if family == QUANT:
        joint = fit_joint_quant(c[0], c[1], config)
        sep = _SeparateFit([fit_single_quant(d, config) for d in c])
    else:
        joint = fit_joint_binary(c[0], c[1], config)
        sep = _SeparateFit([fit_single_binary(d, config) for d in c])
    return c, joint, sep


def _phi(fit, trait):
    if isinstance(fit, _SeparateFit):
        return fit.fits[trait - 1].params.phi[0]
    return fit.params.phi[trait - 1]


def score(fit, centered, test, truth_gamma, family, tau=0.2) -> dict:
    """Identification and prediction scores, averaged over the two traits."""
    aucs, powers, fdrs, preds = [], [], [], []
    for k in (1, 2):
        lf = fit.lfdr[k - 1]
        truth = truth_gamma[:, k - 1]
        aucs.append(auc(1.0 - lf, truth))
        powers.append(power_at_fdr(lf, truth, tau))
        fdrs.append(empirical_fdr(fdr_select(lf, tau).selected, truth))
        d, t = centered[k - 1], test[k - 1]
        m = _effects(fit, k)
        eta = (t.genotypes - d.column_means) @ m
        if family == QUANT:
            preds.append(pearson(t.phenotype, d.phenotype_mean + eta))
        else:
            eta = eta + t.covariates @ _phi(fit, k)
            preds.append(auc(eta, t.phenotype))
    return {
        "auc": float(np.mean(aucs)),
        "power": float(np.nanmean(powers)),
        "fdr": float(np.mean(fdrs)),
        "prediction": float(np.mean(preds)),
    }


def run_replicate(sim: SimConfig, replicate: int, config: FitConfig | None = None, tau: float = 0.2):
    pair = simulate_pair(sim, replicate)
    centered, joint, sep = fit_pair(pair.train, sim.family, config)
    rows = []
    for method, fit in zip(METHODS, (joint, sep)):
        row = {"g": sim.g, "replicate": replicate, "method": method}
        row.update(score(fit, centered, pair.test, pair.truth.gamma, sim.family, tau))
        rows.append(row)
    return rows


def _task(args):
    return run_replicate(*args)


def run_benchmark(base: SimConfig, g_grid, replicates: int, config: FitConfig | None = None,
                  tau: float = 0.2, workers: int | None = None) -> list:
    """Rows of (g, replicate, method, auc, power, fdr, prediction), sorted."""
    tasks = [(replace(base, g=float(g)), r, config, tau) for g in g_grid for r in range(replicates)]
    n = worker_count(workers)
    if n == 1:
        chunks = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as ex:
            chunks = list(ex.map(_task, tasks))
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["g"], r["replicate"], METHODS.index(r["method"])))
    return rows


def write_rows(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow(
                [repr(float(r["g"])), r["replicate"], r["method"]]
                + [repr(float(r[c])) for c in ("auc", "power", "fdr", "prediction")]
            )


def _lrt_task(args):
    sim, replicate, config = args
    pair = simulate_pair(sim, replicate)
    c = [center(d) for d in pair.train]
    test = pleiotropy_lrt(c[0], c[1], config, family=sim.family)
    return replicate, test.lambda_, test.p_value, test.converged


def lrt_calibration(sim: SimConfig, replicates: int, config: FitConfig | None = None, workers=None):
    """(replicate, lambda, p_value, converged) for each simulated pair."""
    tasks = [(sim, r, config) for r in range(replicates)]
    n = worker_count(workers)
    if n == 1:
        out = [_lrt_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as ex:
            out = list(ex.map(_lrt_task, tasks))
    return sorted(out)
