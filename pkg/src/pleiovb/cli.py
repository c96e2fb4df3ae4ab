"""Command-line interface: simulate, fit, test-pleiotropy, predict, benchmark.

Exit codes: 0 success (non-convergence included), 2 usage error, 3 data
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import run_benchmark, write_rows
from .binary import fit_joint_binary, fit_single_binary
from .data import (
    BINARY,
    GROUPS,
    QUANT,
    DataError,
    FitConfig,
    NumericalError,
    align_pair,
    center,
    load_dataset,
    read_genotypes,
    read_matrix,
    write_dataset,
)
from .inference import covariate_score, genetic_score, pleiotropy_lrt
from .quant import fit_joint_quant, fit_single_quant
from .simulate import SimConfig, simulate_pair, write_truth

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
DEFAULT_ALPHA1 = {QUANT: 0.005, BINARY: 0.0025}

log = logging.getLogger("pleiovb")


class UsageError(Exception):
    pass


def _r(v) -> str:
    return repr(float(v))


# -- simulate ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.family == QUANT and (args.prevalence is not None or args.case_ratio is not None):
        raise UsageError("--prevalence/--case-ratio require --family binary")
    cfg = SimConfig(
        n=args.n,
        n_test=args.n_test,
        p=args.p,
        rho=args.rho,
        maf_low=args.maf_low,
        maf_high=args.maf_high,
        alpha1=args.alpha1 if args.alpha1 is not None else DEFAULT_ALPHA1[args.family],
        g=args.g,
        h_sq=args.h2,
        family=args.family,
        prevalence=args.prevalence if args.prevalence is not None else 0.1,
        case_ratio=args.case_ratio if args.case_ratio is not None else 0.5,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pair = simulate_pair(cfg, args.replicate)
    files = {}
    for k in range(2):
        files[f"study{k + 1}_train"] = write_dataset(out / f"study{k + 1}_train", pair.train[k])
        files[f"study{k + 1}_test"] = write_dataset(out / f"study{k + 1}_test", pair.test[k])
    write_truth(out / "truth.tsv", pair.truth, pair.train[0].snp_ids)
    manifest = {
        "config": cfg.to_dict(),
        "replicate": args.replicate,
        "sigma_e_sq": [float(v) for v in pair.truth.sigma_e_sq],
        "liability_threshold": None if pair.truth.threshold is None else [float(v) for v in pair.truth.threshold],
        "files": {k: {kk: Path(vv).name for kk, vv in v.items()} for k, v in files.items()},
        "truth": "truth.tsv",
        "version": __version__,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("wrote simulated pair to %s", out)
    return 0


# -- fit / test-pleiotropy ----------------------------------------------------


def _study_paths(args, k):
    geno, pheno, cov = (getattr(args, f"{w}{k}") for w in ("geno", "pheno", "cov"))
    if args.sim_dir:
        base = Path(args.sim_dir) / f"study{k}_train"
        geno = geno or f"{base}_genotypes.tsv"
        pheno = pheno or f"{base}_phenotype.tsv"
        c = Path(f"{base}_covariates.tsv")
        if cov is None and c.exists():
            cov = str(c)
    if not geno or not pheno:
        raise UsageError(f"study {k}: --geno{k} and --pheno{k} (or --sim-dir) are required")
    return geno, pheno, cov


def _load_pair(args):
    raw = [load_dataset(*_study_paths(args, k), family=args.family) for k in (1, 2)]
    d1, d2 = align_pair(*raw)
    return center(d1), center(d2)


def _fit_config(args) -> FitConfig:
    return FitConfig(max_iter=args.max_iter, rel_tol=args.rel_tol)


def _base_record(args, datasets):
    return {
        "mode": args.mode,
        "family": args.family,
        "snp_ids": list(datasets[0].snp_ids),
        "column_means": [d.column_means.tolist() for d in datasets],
        "phenotype_mean": [float(d.phenotype_mean) for d in datasets],
    }


def _write_snps(path, snp_ids, mu, s_sq, post, lfdr):
    with open(path, "w") as fh:
        fh.write("\t".join(["snp_id", "mu1", "mu2", "s1_sq", "s2_sq", *(f"a{g}" for g in GROUPS), "lfdr1", "lfdr2"]))
        fh.write("\n")
        for j, sid in enumerate(snp_ids):
            cells = [sid, _r(mu[0, j]), _r(mu[1, j]), _r(s_sq[0, j]), _r(s_sq[1, j])]
            cells += [_r(v) for v in post[j]] if post is not None else ["NA"] * 4
            cells += [_r(lfdr[0, j]), _r(lfdr[1, j])]
            fh.write("\t".join(cells) + "\n")


def cmd_fit(args) -> int:
    datasets = _load_pair(args)
    config = _fit_config(args)
    rec = _base_record(args, datasets)
    if args.mode == "joint":
        fit = fit_joint_quant if args.family == QUANT else fit_joint_binary
        res = fit(*datasets, config)
        rec.update(res.params.to_dict())
        rec.update(
            elbo_trace=res.elbo_trace.tolist(),
            iterations=res.iterations,
            converged=res.converged,
            wall_time=res.wall_time,
        )
        mu, s_sq, post, lfdr = res.state.mu, res.state.s_sq, res.state.group_post, res.lfdr
    else:
        fit = fit_single_quant if args.family == QUANT else fit_single_binary
        fits = [fit(d, config) for d in datasets]
        params = [f.params.to_dict() for f in fits]
        rec["sigma_beta_sq"] = [pp["sigma_beta_sq"][0] for pp in params]
        rec["inclusion_prob"] = [pp["inclusion_prob"] for pp in params]
        if args.family == QUANT:
            rec["sigma_e_sq"] = [pp["sigma_e_sq"][0] for pp in params]
        else:
            rec["phi"] = [pp["phi"][0] for pp in params]
        rec.update(
            elbo_trace=[f.elbo_trace.tolist() for f in fits],
            iterations=[f.iterations for f in fits],
            converged=all(f.converged for f in fits),
            wall_time=sum(f.wall_time for f in fits),
        )
        mu = np.vstack([f.state.mu for f in fits])
        s_sq = np.vstack([f.state.s_sq for f in fits])
        post = None
        lfdr = np.vstack([f.lfdr for f in fits])
    prefix = args.out
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.params.json").write_text(json.dumps(rec, indent=2) + "\n")
    _write_snps(f"{prefix}.snps.tsv", rec["snp_ids"], mu, s_sq, post, lfdr)
    if not rec["converged"]:
        log.warning("fit did not converge within %d iterations", args.max_iter)
    return 0


def cmd_test_pleiotropy(args) -> int:
    datasets = _load_pair(args)
    res = pleiotropy_lrt(*datasets, _fit_config(args), family=args.family)
    text = json.dumps(res.to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# -- predict -----------------------------------------------------------------


def _read_effects(path, trait):
    with open(path) as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    ids = [r["snp_id"] for r in rows]
    mu = np.array([float(r[f"mu{trait}"]) for r in rows])
    incl = 1.0 - np.array([float(r[f"lfdr{trait}"]) for r in rows])
    return ids, incl * mu


def cmd_predict(args) -> int:
    params = json.loads(Path(args.params).read_text())
    k = args.trait - 1
    snp_ids, effects = _read_effects(args.snps, args.trait)
    if snp_ids != params["snp_ids"]:
        raise DataError("SNP table does not match the parameter file")
    sample_ids, geno_ids, X = read_genotypes(args.geno)
    pos = {s: i for i, s in enumerate(geno_ids)}
    missing = [s for s in snp_ids if s not in pos]
    if missing:
        raise DataError(f"genotype file lacks fitted SNPs: {missing[:10]}")
    X = X[:, [pos[s] for s in snp_ids]]
    means = np.asarray(params["column_means"][k])
    score = genetic_score(X, effects, means)
    with open(args.out, "w") as fh:
        if params["family"] == QUANT:
            fh.write("sample_id\tprediction\n")
            pred = params["phenotype_mean"][k] + score
            for sid, v in zip(sample_ids, pred):
                fh.write(f"{sid}\t{_r(v)}\n")
        else:
            phi = np.asarray(params["phi"][k], dtype=float)
            if args.cov:
                cids, _, Z = read_matrix(args.cov)
                if cids != sample_ids:
                    raise DataError("covariate sample ids do not match the genotype file")
                if not np.allclose(Z[:, 0], 1.0):
                    Z = np.column_stack([np.ones(len(sample_ids)), Z])
            else:
                Z = np.ones((len(sample_ids), 1))
            eta = covariate_score(Z, phi) + score
            prob = 1.0 / (1.0 + np.exp(-eta))
            fh.write("sample_id\teta\tprob\n")
            for sid, e, pr in zip(sample_ids, eta, prob):
                fh.write(f"{sid}\t{_r(e)}\t{_r(pr)}\n")
    return 0


# -- benchmark ---------------------------------------------------------------


def cmd_benchmark(args) -> int:
    try:
        grid = [float(v) for v in args.g_grid.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"invalid --g-grid {args.g_grid!r}") from None
    base = SimConfig(
        n=args.n,
        n_test=args.n_test,
        p=args.p,
        rho=args.rho,
        alpha1=args.alpha1,
        g=0.0,
        h_sq=args.h2,
        family=args.family,
        seed=args.seed,
    )
    rows = run_benchmark(base, grid, args.replicates, _fit_config(args), args.tau, args.workers)
    write_rows(args.out, rows)
    return 0


# -- parser ------------------------------------------------------------------


def _add_fit_flags(p):
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--rel-tol", type=float, default=1e-5)


def _add_inputs(p):
    p.add_argument("--family", choices=(QUANT, BINARY), required=True)
    p.add_argument("--sim-dir", help="directory written by `simulate`; fills the study paths")
    for k in (1, 2):
        p.add_argument(f"--geno{k}", help=f"genotype TSV of study {k}")
        p.add_argument(f"--pheno{k}", help=f"phenotype TSV of study {k}")
        p.add_argument(f"--cov{k}", help=f"covariate TSV of study {k} (optional)")
    _add_fit_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pleiovb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a paired synthetic GWAS")
    s.add_argument("--family", choices=(QUANT, BINARY), default=QUANT)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--n-test", type=int, default=500)
    s.add_argument("--rho", type=float, default=0.5)
    s.add_argument("--maf-low", type=float, default=0.05)
    s.add_argument("--maf-high", type=float, default=0.5)
    s.add_argument("--alpha1", type=float, default=None)
    s.add_argument("--g", type=float, default=0.0)
    s.add_argument("--h2", type=float, default=0.5)
    s.add_argument("--prevalence", type=float, default=None)
    s.add_argument("--case-ratio", type=float, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--replicate", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit joint or separate models")
    f.add_argument("--mode", choices=("joint", "separate"), default="joint")
    _add_inputs(f)
    f.add_argument("--out", required=True, help="output prefix")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("test-pleiotropy", help="likelihood-ratio test for pleiotropy")
    _add_inputs(t)
    t.add_argument("--out", help="JSON output path (default stdout)")
    t.set_defaults(func=cmd_test_pleiotropy)

    pr = sub.add_parser("predict", help="predict phenotypes for new genotypes")
    pr.add_argument("--params", required=True)
    pr.add_argument("--snps", required=True)
    pr.add_argument("--geno", required=True)
    pr.add_argument("--cov")
    pr.add_argument("--trait", type=int, choices=(1, 2), default=1)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    b = sub.add_parser("benchmark", help="replicated joint-vs-separate simulation study")
    b.add_argument("--family", choices=(QUANT, BINARY), default=QUANT)
    b.add_argument("--g-grid", default="0,0.5,1")
    b.add_argument("--replicates", type=int, default=20)
    b.add_argument("--n", type=int, default=500)
    b.add_argument("--p", type=int, default=2000)
    b.add_argument("--n-test", type=int, default=200)
    b.add_argument("--alpha1", type=float, default=0.01)
    b.add_argument("--h2", type=float, default=0.5)
    b.add_argument("--rho", type=float, default=0.5)
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--tau", type=float, default=0.2)
    b.add_argument("--workers", type=int, default=1)
    _add_fit_flags(b)
    b.add_argument("--out", required=True, help="CSV output path")
    b.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except DataError as e:
        print(f"pleiovb: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"pleiovb: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, FileNotFoundError) as e:
        print(f"pleiovb: {e}", file=sys.stderr)
        return EXIT_DATA if isinstance(e, FileNotFoundError) else EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
