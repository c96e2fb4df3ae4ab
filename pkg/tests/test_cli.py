import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from pleiovb import cli
from pleiovb.data import NumericalError, center, load_dataset
from pleiovb.inference import predict_quant
from pleiovb.quant import fit_joint_quant


def run(*args):
    return cli.main([str(a) for a in args])


def _digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--family", "quant", "--n", 200, "--p", 150, "--n-test", 50, "--g", 1,
               "--alpha1", 0.04, "--seed", 7, "--out", out) == 0
    return out


def test_simulate_contract(sim_dir):
    names = {p.name for p in sim_dir.iterdir()}
    for k in (1, 2):
        for split in ("train", "test"):
            assert f"study{k}_{split}_genotypes.tsv" in names
            assert f"study{k}_{split}_phenotype.tsv" in names
    assert {"truth.tsv", "manifest.json"} <= names
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 7 and manifest["config"]["p"] == 150
    header = (sim_dir / "study1_train_genotypes.tsv").read_text().splitlines()[0].split("\t")
    assert header[0] == "sample_id" and len(header) == 151


def test_simulate_desk_scale_and_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    flags = ["--family", "quant", "--n", 500, "--p", 2000, "--g", 0.5, "--h2", 0.5, "--rho", 0.5, "--seed", 7]
    assert run("simulate", *flags, "--out", a) == 0
    assert run("simulate", *flags, "--out", b) == 0
    assert _digest(a) == _digest(b)
    assert len(_digest(a)) == 10


def test_simulate_binary_writes_covariates(tmp_path):
    assert run("simulate", "--family", "binary", "--n", 60, "--p", 80, "--n-test", 20, "--alpha1", 0.05,
               "--prevalence", 0.2, "--out", tmp_path) == 0
    assert (tmp_path / "study2_test_covariates.tsv").exists()


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        run("simulate", "--n", 10, "--out", tmp_path)
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        run("simulate", "--n", 10, "--p", 10, "--prevalence", 0.1, "--out", tmp_path)
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        run("fit", "--family", "quant", "--out", tmp_path / "x")
    assert e.value.code == 2


def test_data_error_exit_code(tmp_path, sim_dir):
    bad = tmp_path / "g.tsv"
    lines = (sim_dir / "study1_train_genotypes.tsv").read_text().splitlines()
    cells = lines[1].split("\t")
    cells[1] = "3"
    bad.write_text("\n".join([lines[0], "\t".join(cells), *lines[2:]]) + "\n")
    code = run("fit", "--family", "quant", "--sim-dir", sim_dir, "--geno1", bad, "--out", tmp_path / "f")
    assert code == 3


def test_numerical_error_exit_code(tmp_path, sim_dir, monkeypatch):
    def boom(*a, **k):
        raise NumericalError("non-finite lower bound")

    monkeypatch.setattr(cli, "fit_joint_quant", boom)
    assert run("fit", "--family", "quant", "--sim-dir", sim_dir, "--out", tmp_path / "f") == 4


def _snps(path):
    with open(path) as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def test_fit_joint_outputs(tmp_path, sim_dir):
    prefix = tmp_path / "joint"
    assert run("fit", "--family", "quant", "--sim-dir", sim_dir, "--out", prefix) == 0
    rows = _snps(f"{prefix}.snps.tsv")
    assert len(rows) == 150
    assert list(rows[0]) == ["snp_id", "mu1", "mu2", "s1_sq", "s2_sq", "a00", "a01", "a10", "a11", "lfdr1", "lfdr2"]
    params = json.loads(open(f"{prefix}.params.json").read())
    for key in ("sigma_beta_sq", "sigma_e_sq", "group_probs", "elbo_trace", "iterations", "converged", "wall_time"):
        assert key in params
    assert params["converged"] is True
    # the file carries the same numbers as an in-process fit
    d = [center(load_dataset(sim_dir / f"study{k}_train_genotypes.tsv", sim_dir / f"study{k}_train_phenotype.tsv"))
         for k in (1, 2)]
    fit = fit_joint_quant(*d)
    np.testing.assert_array_equal([float(r["lfdr1"]) for r in rows], fit.lfdr[0])
    assert params["elbo_trace"] == fit.elbo_trace.tolist()


def test_fit_separate_outputs(tmp_path, sim_dir):
    prefix = tmp_path / "sep"
    assert run("fit", "--mode", "separate", "--family", "quant", "--sim-dir", sim_dir, "--out", prefix) == 0
    rows = _snps(f"{prefix}.snps.tsv")
    assert len(rows) == 150
    assert rows[0]["a11"] == "NA" and rows[0]["lfdr2"] != "NA"
    params = json.loads(open(f"{prefix}.params.json").read())
    assert len(params["inclusion_prob"]) == 2


def test_tighter_tolerance_more_iterations(tmp_path, sim_dir):
    run("fit", "--family", "quant", "--sim-dir", sim_dir, "--out", tmp_path / "a")
    run("fit", "--family", "quant", "--sim-dir", sim_dir, "--rel-tol", 1e-7, "--out", tmp_path / "b")
    it_a = json.loads(open(tmp_path / "a.params.json").read())["iterations"]
    it_b = json.loads(open(tmp_path / "b.params.json").read())["iterations"]
    assert it_b > it_a


def test_non_convergence_exit_zero(tmp_path, sim_dir):
    assert run("fit", "--family", "quant", "--sim-dir", sim_dir, "--max-iter", 1, "--out", tmp_path / "x") == 0
    assert json.loads(open(tmp_path / "x.params.json").read())["converged"] is False


def test_test_pleiotropy_json(tmp_path, sim_dir):
    out = tmp_path / "lrt.json"
    assert run("test-pleiotropy", "--family", "quant", "--sim-dir", sim_dir, "--out", out) == 0
    res = json.loads(out.read_text())
    assert {"lambda", "p_value", "alpha_hat", "alt_elbo", "null_elbo"} <= set(res)
    assert res["lambda"] == pytest.approx(2 * (res["alt_elbo"] - res["null_elbo"]))


def test_predict_matches_library(tmp_path, sim_dir):
    prefix = tmp_path / "joint"
    run("fit", "--family", "quant", "--sim-dir", sim_dir, "--out", prefix)
    out = tmp_path / "pred.tsv"
    geno = sim_dir / "study2_test_genotypes.tsv"
    assert run("predict", "--params", f"{prefix}.params.json", "--snps", f"{prefix}.snps.tsv", "--geno", geno,
               "--trait", 2, "--out", out) == 0
    pred = _snps(out)
    assert len(pred) == 50
    d = [center(load_dataset(sim_dir / f"study{k}_train_genotypes.tsv", sim_dir / f"study{k}_train_phenotype.tsv"))
         for k in (1, 2)]
    fit = fit_joint_quant(*d)
    test = load_dataset(geno, sim_dir / "study2_test_phenotype.tsv")
    expected = predict_quant(test.genotypes, fit, 2, d[1].column_means, d[1].phenotype_mean)
    np.testing.assert_allclose([float(r["prediction"]) for r in pred], expected, rtol=1e-12)


def test_binary_fit_and_predict(tmp_path):
    sim = tmp_path / "sim"
    run("simulate", "--family", "binary", "--n", 150, "--p", 100, "--n-test", 40, "--alpha1", 0.05, "--g", 1,
        "--out", sim)
    prefix = tmp_path / "b"
    assert run("fit", "--family", "binary", "--sim-dir", sim, "--out", prefix) == 0
    assert "phi" in json.loads(open(f"{prefix}.params.json").read())
    out = tmp_path / "p.tsv"
    assert run("predict", "--params", f"{prefix}.params.json", "--snps", f"{prefix}.snps.tsv",
               "--geno", sim / "study1_test_genotypes.tsv", "--cov", sim / "study1_test_covariates.tsv",
               "--out", out) == 0
    rows = _snps(out)
    assert len(rows) == 40
    assert all(0 < float(r["prob"]) < 1 for r in rows)


def test_benchmark_row_count(tmp_path):
    out = tmp_path / "bench.csv"
    assert run("benchmark", "--n", 120, "--p", 200, "--n-test", 40, "--alpha1", 0.05, "--replicates", 2,
               "--g-grid", "0,0.5,1", "--out", out) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 3 * 2 * 2
    assert list(rows[0]) == ["g", "replicate", "method", "auc", "power", "fdr", "prediction"]
    keys = [(float(r["g"]), int(r["replicate"]), r["method"]) for r in rows]
    assert keys == sorted(keys, key=lambda k: (k[0], k[1], ["joint", "separate"].index(k[2])))


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "pleiovb.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
