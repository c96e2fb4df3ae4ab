"""Datasets, model parameters and fit containers shared by the solvers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

QUANT = "quant"
BINARY = "binary"
FAMILIES = (QUANT, BINARY)

# column order of the per-SNP group posterior: (gamma1, gamma2)
GROUPS = ("00", "01", "10", "11")
# columns of GROUPS in which trait k is included
TRAIT_GROUPS = ((2, 3), (1, 3))


class PleioVBError(Exception):
    """Base class for package errors."""


class DataError(PleioVBError, ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(PleioVBError, ArithmeticError):
    """A solver produced a non-finite quantity."""


@dataclass(frozen=True)
class GroupProbs:
    """Prior probabilities of the four association groups (00, 01, 10, 11)."""

    a00: float
    a01: float
    a10: float
    a11: float

    def __post_init__(self):
        vals = self.as_array()
        if np.any(vals < 0) or np.any(vals > 1) or not np.all(np.isfinite(vals)):
            raise ValueError(f"group probabilities must lie in [0, 1], got {vals}")
        if abs(vals.sum() - 1.0) > 1e-12:
            raise ValueError(f"group probabilities must sum to 1, got {vals.sum()!r}")

    @classmethod
    def from_array(cls, a) -> "GroupProbs":
        a = np.asarray(a, dtype=float)
        return cls(*(float(v) for v in a / a.sum()))

    @classmethod
    def independent(cls, pi1: float, pi2: float) -> "GroupProbs":
        return cls((1 - pi1) * (1 - pi2), (1 - pi1) * pi2, pi1 * (1 - pi2), pi1 * pi2)

    def as_array(self) -> np.ndarray:
        return np.array([self.a00, self.a01, self.a10, self.a11], dtype=float)

    @property
    def trait1(self) -> float:
        """Marginal inclusion probability for trait 1 (alpha_1*)."""
        return self.a10 + self.a11

    @property
    def trait2(self) -> float:
        """Marginal inclusion probability for trait 2 (alpha_*1)."""
        return self.a01 + self.a11


@dataclass
class ModelParams:
    """Hyperparameters of a fitted model.

    Joint fits carry ``group_probs``; single-trait fits carry
    ``inclusion_prob``.  Quantitative fits populate ``sigma_e_sq``, binary
    fits populate ``phi``.
    """

    sigma_beta_sq: tuple
    group_probs: Optional[GroupProbs] = None
    inclusion_prob: Optional[float] = None
    sigma_e_sq: Optional[tuple] = None
    phi: Optional[tuple] = None

    def __post_init__(self):
        if any(not (v > 0) for v in self.sigma_beta_sq):
            raise ValueError("slab variances must be positive")
        if (self.sigma_e_sq is None) == (self.phi is None):
            raise ValueError("exactly one of sigma_e_sq and phi must be set")
        if self.sigma_e_sq is not None and any(not (v > 0) for v in self.sigma_e_sq):
            raise ValueError("noise variances must be positive")
        if (self.group_probs is None) == (self.inclusion_prob is None):
            raise ValueError("exactly one of group_probs and inclusion_prob must be set")

    @property
    def family(self) -> str:
        return QUANT if self.sigma_e_sq is not None else BINARY

    @property
    def n_traits(self) -> int:
        return len(self.sigma_beta_sq)

    def to_dict(self) -> dict:
        out = {"sigma_beta_sq": [float(v) for v in self.sigma_beta_sq]}
        if self.group_probs is not None:
            out["group_probs"] = self.group_probs.as_array().tolist()
        if self.inclusion_prob is not None:
            out["inclusion_prob"] = float(self.inclusion_prob)
        if self.sigma_e_sq is not None:
            out["sigma_e_sq"] = [float(v) for v in self.sigma_e_sq]
        if self.phi is not None:
            out["phi"] = [np.asarray(v, dtype=float).tolist() for v in self.phi]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        gp = d.get("group_probs")
        return cls(
            sigma_beta_sq=tuple(d["sigma_beta_sq"]),
            group_probs=GroupProbs(*gp) if gp is not None else None,
            inclusion_prob=d.get("inclusion_prob"),
            sigma_e_sq=tuple(d["sigma_e_sq"]) if d.get("sigma_e_sq") is not None else None,
            phi=tuple(np.asarray(v, dtype=float) for v in d["phi"]) if d.get("phi") is not None else None,
        )


@dataclass
class FitConfig:
    """Stopping rule and initial values for the VBEM solvers."""

    max_iter: int = 1000
    rel_tol: float = 1e-5
    init_group_probs: GroupProbs = field(default_factory=lambda: GroupProbs(0.97, 0.01, 0.01, 0.01))
    init_sigma_beta_sq: tuple = (1.0, 1.0)
    # None means Var(y_k) / 2 (quantitative only)
    init_sigma_e_sq: Optional[tuple] = None

    def __post_init__(self):
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


@dataclass
class VariationalState:
    """Per-SNP variational posterior for K traits (K = 1 or 2).

    ``group_post`` has 2**K columns: (0, 1) for a single trait and
    (00, 01, 10, 11) for a pair.  ``fitted[k]`` caches ``X_k @ m_k`` where
    ``m_k`` is the posterior mean effect (inclusion mass times ``mu``).
    """

    mu: np.ndarray
    s_sq: np.ndarray
    group_post: np.ndarray
    fitted: list
    psi: Optional[list] = None

    def inclusion(self) -> np.ndarray:
        """Posterior inclusion probability, shape (K, p)."""
        if self.group_post.shape[1] == 2:
            return self.group_post[:, 1][None, :].copy()
        return np.vstack([self.group_post[:, list(cols)].sum(axis=1) for cols in TRAIT_GROUPS])

    def effects(self) -> np.ndarray:
        """Posterior mean effect E[gamma * beta], shape (K, p)."""
        return self.inclusion() * self.mu

    def copy(self) -> "VariationalState":
        return VariationalState(
            mu=self.mu.copy(),
            s_sq=self.s_sq.copy(),
            group_post=self.group_post.copy(),
            fitted=[f.copy() for f in self.fitted],
            psi=None if self.psi is None else [v.copy() for v in self.psi],
        )


@dataclass
class FitResult:
    params: ModelParams
    state: VariationalState
    elbo_trace: np.ndarray
    iterations: int
    converged: bool
    lfdr: np.ndarray
    wall_time: float = 0.0

    @property
    def elbo(self) -> float:
        return float(self.elbo_trace[-1])


@dataclass
class GwasDataset:
    """One study: genotypes (n x p), phenotype, optional covariates."""

    genotypes: np.ndarray
    phenotype: np.ndarray
    snp_ids: list
    sample_ids: list
    family: str = QUANT
    covariates: Optional[np.ndarray] = None
    column_means: Optional[np.ndarray] = None
    phenotype_mean: float = 0.0
    centered: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown family {self.family!r}")
        self.genotypes = np.asarray(self.genotypes, dtype=float)
        self.phenotype = np.asarray(self.phenotype, dtype=float)
        if self.genotypes.ndim != 2:
            raise DataError("genotypes must be a 2-d matrix")
        n, p = self.genotypes.shape
        if self.phenotype.shape != (n,):
            raise DataError(f"phenotype length {self.phenotype.shape[0]} does not match {n} genotype rows")
        if len(self.snp_ids) != p:
            raise DataError(f"{len(self.snp_ids)} SNP ids for {p} genotype columns")
        if len(self.sample_ids) != n:
            raise DataError(f"{len(self.sample_ids)} sample ids for {n} genotype rows")
        if not np.all(np.isfinite(self.genotypes)):
            raise DataError("missing genotype values are not allowed")
        if not np.all(np.isfinite(self.phenotype)):
            raise DataError("missing phenotype values are not allowed")
        if not self.centered and not np.all(np.isin(self.genotypes, (0.0, 1.0, 2.0))):
            raise DataError("invalid genotype: values must be 0, 1 or 2")
        if self.family == BINARY:
            if not np.all(np.isin(self.phenotype, (-1.0, 1.0))):
                raise DataError("binary phenotype must be coded -1/+1")
            if self.covariates is None:
                self.covariates = np.ones((n, 1))
        if self.covariates is not None:
            self.covariates = np.asarray(self.covariates, dtype=float)
            if self.covariates.ndim == 1:
                self.covariates = self.covariates[:, None]
            if self.covariates.shape[0] != n:
                raise DataError("covariate rows do not match genotype rows")
            if not np.all(np.isfinite(self.covariates)):
                raise DataError("missing covariate values are not allowed")
            if not np.allclose(self.covariates[:, 0], 1.0):
                self.covariates = np.column_stack([np.ones(n), self.covariates])

    @property
    def n(self) -> int:
        return self.genotypes.shape[0]

    @property
    def p(self) -> int:
        return self.genotypes.shape[1]


def center(dataset: GwasDataset) -> GwasDataset:
    """Return a copy with mean-zero genotype columns (and phenotype, if quantitative).

    The removed means are kept on the result for prediction.
    """
    if dataset.centered:
        raise DataError("dataset is already centered")
    col_means = dataset.genotypes.mean(axis=0)
    X = dataset.genotypes - col_means
    y = dataset.phenotype
    y_mean = 0.0
    if dataset.family == QUANT:
        y_mean = float(y.mean())
        y = y - y_mean
    return replace(
        dataset,
        genotypes=X,
        phenotype=y,
        column_means=col_means,
        phenotype_mean=y_mean,
        centered=True,
        covariates=None if dataset.covariates is None else dataset.covariates.copy(),
    )


def align_pair(d1: GwasDataset, d2: GwasDataset):
    """Reorder the second study's SNP columns to match the first's."""
    ids1, ids2 = list(d1.snp_ids), list(d2.snp_ids)
    if ids1 == ids2:
        return d1, d2
    s1, s2 = set(ids1), set(ids2)
    if s1 != s2 or len(s1) != len(ids1) or len(s2) != len(ids2):
        only1 = sorted(s1 - s2)
        only2 = sorted(s2 - s1)
        raise DataError(
            f"SNP sets differ: only in study 1: {only1[:10]}, only in study 2: {only2[:10]}"
        )
    pos = {s: i for i, s in enumerate(ids2)}
    order = np.array([pos[s] for s in ids1])
    d2 = replace(
        d2,
        genotypes=d2.genotypes[:, order],
        snp_ids=ids1,
        column_means=None if d2.column_means is None else d2.column_means[order],
    )
    return d1, d2


def _read_table(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter="\t") if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    width = len(header)
    for i, r in enumerate(body, start=2):
        if len(r) != width:
            raise DataError(f"{path}:{i}: expected {width} fields, found {len(r)}")
    return header, body


def _parse_float(value, path, line):
    try:
        v = float(value)
    except ValueError:
        raise DataError(f"{path}:{line}: missing or non-numeric value {value!r}") from None
    if not np.isfinite(v):
        raise DataError(f"{path}:{line}: missing value {value!r}")
    return v


def read_genotypes(path):
    header, body = _read_table(path)
    snp_ids = header[1:]
    sample_ids = [r[0] for r in body]
    X = np.empty((len(body), len(snp_ids)))
    for i, r in enumerate(body):
        for j, v in enumerate(r[1:]):
            if v not in ("0", "1", "2"):
                if v.strip() in ("", "NA", "nan", "NaN", "-9", "."):
                    raise DataError(f"{path}:{i + 2}: missing genotype for {snp_ids[j]}")
                raise DataError(f"{path}:{i + 2}: invalid genotype {v!r} for {snp_ids[j]}")
            X[i, j] = int(v)
    return sample_ids, snp_ids, X


def read_matrix(path):
    header, body = _read_table(path)
    ids = [r[0] for r in body]
    M = np.array(
        [[_parse_float(v, path, i + 2) for v in r[1:]] for i, r in enumerate(body)], dtype=float
    ).reshape(len(body), len(header) - 1)
    return ids, header[1:], M


def _match(ids, ref, what, path):
    if list(ids) == list(ref):
        return None
    pos = {s: i for i, s in enumerate(ids)}
    missing = [s for s in ref if s not in pos]
    if missing or len(pos) != len(ids) or len(ids) != len(ref):
        raise DataError(f"{path}: unmatched sample id(s) in {what}: {missing[:10]}")
    return np.array([pos[s] for s in ref])


def load_dataset(genotype_path, phenotype_path, covariate_path=None, family: str = QUANT) -> GwasDataset:
    """Read one study from TSV files; rows are matched by sample id."""
    if family not in FAMILIES:
        raise DataError(f"unknown family {family!r}")
    sample_ids, snp_ids, X = read_genotypes(genotype_path)
    pids, _, Y = read_matrix(phenotype_path)
    if Y.shape[1] != 1:
        raise DataError(f"{phenotype_path}: expected exactly one phenotype column")
    if len(pids) != len(sample_ids):
        raise DataError(
            f"dimension mismatch: {len(sample_ids)} genotype rows vs {len(pids)} phenotype rows"
        )
    order = _match(pids, sample_ids, "phenotype file", phenotype_path)
    y = Y[:, 0] if order is None else Y[order, 0]
    if family == BINARY:
        vals = set(np.unique(y).tolist())
        if vals <= {0.0, 1.0}:
            y = 2.0 * y - 1.0
        elif not vals <= {-1.0, 1.0}:
            raise DataError(f"{phenotype_path}: binary phenotype must be 0/1 or -1/1, found {sorted(vals)[:5]}")
    Z = None
    if covariate_path is not None:
        cids, _, Z = read_matrix(covariate_path)
        if len(cids) != len(sample_ids):
            raise DataError(
                f"dimension mismatch: {len(sample_ids)} genotype rows vs {len(cids)} covariate rows"
            )
        order = _match(cids, sample_ids, "covariate file", covariate_path)
        if order is not None:
            Z = Z[order]
    return GwasDataset(X, y, list(snp_ids), list(sample_ids), family=family, covariates=Z)


def _fmt(v) -> str:
    return repr(float(v))


def write_genotypes(path, sample_ids: Sequence[str], snp_ids: Sequence[str], X) -> None:
    X = np.asarray(X).astype(np.int64)
    with open(path, "w", newline="") as fh:
        fh.write("\t".join(["sample_id", *snp_ids]) + "\n")
        for sid, row in zip(sample_ids, X):
            fh.write(sid + "\t" + "\t".join(map(str, row.tolist())) + "\n")


def write_matrix(path, sample_ids, columns, M) -> None:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    with open(path, "w", newline="") as fh:
        fh.write("\t".join(["sample_id", *columns]) + "\n")
        for sid, row in zip(sample_ids, M):
            fh.write(sid + "\t" + "\t".join(_fmt(v) for v in row) + "\n")


def write_dataset(prefix, d: GwasDataset) -> dict:
    """Write genotype/phenotype(/covariate) TSVs as ``<prefix>_*.tsv``."""
    prefix = Path(prefix)
    paths = {
        "genotypes": f"{prefix}_genotypes.tsv",
        "phenotype": f"{prefix}_phenotype.tsv",
    }
    write_genotypes(paths["genotypes"], d.sample_ids, d.snp_ids, d.genotypes)
    write_matrix(paths["phenotype"], d.sample_ids, ["value"], d.phenotype)
    if d.covariates is not None:
        paths["covariates"] = f"{prefix}_covariates.tsv"
        cols = [f"cov{i + 1}" for i in range(d.covariates.shape[1])]
        write_matrix(paths["covariates"], d.sample_ids, cols, d.covariates)
    return paths
