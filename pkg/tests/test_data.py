import numpy as np
import pytest

from pleiovb.data import (
    BINARY,
    QUANT,
    DataError,
    FitConfig,
    GroupProbs,
    GwasDataset,
    ModelParams,
    align_pair,
    center,
    load_dataset,
    write_dataset,
)


def _write(path, header, rows):
    path.write_text("\t".join(header) + "\n" + "".join("\t".join(map(str, r)) + "\n" for r in rows))
    return path


@pytest.fixture
def study(tmp_path):
    g = _write(tmp_path / "g.tsv", ["sample_id", "rs1", "rs2"], [["a", 0, 1], ["b", 1, 2], ["c", 2, 0]])
    p = _write(tmp_path / "p.tsv", ["sample_id", "value"], [["a", 1.5], ["b", -0.5], ["c", 2.0]])
    return tmp_path, g, p


def test_load_three_by_two(study):
    _, g, p = study
    d = load_dataset(g, p)
    assert (d.n, d.p) == (3, 2)
    assert d.snp_ids == ["rs1", "rs2"]
    np.testing.assert_array_equal(d.phenotype, [1.5, -0.5, 2.0])


def test_binary_zero_one_recoded(study):
    tmp, g, _ = study
    p = _write(tmp / "b.tsv", ["sample_id", "value"], [["a", 0], ["b", 1], ["c", 1]])
    d = load_dataset(g, p, family=BINARY)
    np.testing.assert_array_equal(d.phenotype, [-1, 1, 1])
    np.testing.assert_array_equal(d.covariates, np.ones((3, 1)))


def test_invalid_genotype(study):
    tmp, _, p = study
    g = _write(tmp / "bad.tsv", ["sample_id", "rs1", "rs2"], [["a", 0, 3], ["b", 1, 2], ["c", 2, 0]])
    with pytest.raises(DataError, match="invalid genotype"):
        load_dataset(g, p)


def test_missing_genotype_has_own_message(study):
    tmp, _, p = study
    g = _write(tmp / "na.tsv", ["sample_id", "rs1", "rs2"], [["a", 0, "NA"], ["b", 1, 2], ["c", 2, 0]])
    with pytest.raises(DataError, match="missing genotype"):
        load_dataset(g, p)


def test_unmatched_sample_id(study):
    tmp, g, _ = study
    p = _write(tmp / "p2.tsv", ["sample_id", "value"], [["a", 1], ["b", 2], ["zz", 3]])
    with pytest.raises(DataError, match="unmatched sample"):
        load_dataset(g, p)


def test_dimension_mismatch(study):
    tmp, g, _ = study
    p = _write(tmp / "p3.tsv", ["sample_id", "value"], [["a", 1], ["b", 2]])
    with pytest.raises(DataError, match="dimension mismatch"):
        load_dataset(g, p)


def test_phenotype_rows_matched_by_id(study):
    tmp, g, _ = study
    p = _write(tmp / "p4.tsv", ["sample_id", "value"], [["c", 3.0], ["a", 1.0], ["b", 2.0]])
    np.testing.assert_array_equal(load_dataset(g, p).phenotype, [1.0, 2.0, 3.0])


def test_center_column_and_phenotype():
    X = np.array([[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]])
    d = center(GwasDataset(X, np.array([2.0, 0.0, -2.0]), ["a", "b"], ["1", "2", "3"]))
    np.testing.assert_allclose(d.genotypes[:, 0], [-1, 0, 1])
    assert d.column_means[0] == 1.0
    np.testing.assert_allclose(d.phenotype, [2, 0, -2])
    assert d.phenotype_mean == 0.0
    assert d.centered


def test_center_binary_phenotype_untouched():
    X = np.array([[0.0], [1.0], [2.0]])
    d = center(GwasDataset(X, np.array([-1.0, 1.0, 1.0]), ["a"], ["1", "2", "3"], family=BINARY))
    np.testing.assert_array_equal(d.phenotype, [-1, 1, 1])


def test_center_twice_rejected():
    d = center(GwasDataset(np.array([[0.0], [2.0]]), np.array([1.0, 2.0]), ["a"], ["1", "2"]))
    with pytest.raises(DataError):
        center(d)


def test_centering_mean_zero(rng):
    X = rng.integers(0, 3, (50, 7)).astype(float)
    d = center(GwasDataset(X, rng.standard_normal(50), list("abcdefg"), [str(i) for i in range(50)]))
    assert np.abs(d.genotypes.mean(0)).max() < 1e-10
    assert abs(d.phenotype.mean()) < 1e-10


def _pair(ids1, ids2):
    X = np.array([[0.0, 1.0, 2.0], [1.0, 2.0, 0.0]])
    d1 = GwasDataset(X, np.zeros(2), ids1, ["x", "y"])
    d2 = GwasDataset(X.copy(), np.zeros(2), ids2, ["x", "y"])
    return d1, d2


def test_align_permutes_second():
    d1, d2 = _pair(["a", "b", "c"], ["c", "a", "b"])
    _, out = align_pair(d1, d2)
    assert out.snp_ids == ["a", "b", "c"]
    np.testing.assert_array_equal(out.genotypes, d2.genotypes[:, [1, 2, 0]])


def test_align_identity_is_noop():
    d1, d2 = _pair(["a", "b", "c"], ["a", "b", "c"])
    a, b = align_pair(d1, d2)
    assert a is d1 and b is d2


def test_align_disjoint_ids():
    d1, d2 = _pair(["a", "b", "c"], ["x", "y", "z"])
    with pytest.raises(DataError):
        align_pair(d1, d2)


def test_round_trip_through_files(tmp_path, rng):
    X = rng.integers(0, 3, (6, 4)).astype(float)
    d = GwasDataset(X, rng.standard_normal(6), ["r1", "r2", "r3", "r4"], list("abcdef"))
    paths = write_dataset(tmp_path / "s", d)
    back = load_dataset(paths["genotypes"], paths["phenotype"])
    np.testing.assert_array_equal(back.genotypes, X)
    np.testing.assert_array_equal(back.phenotype, d.phenotype)
    assert back.sample_ids == d.sample_ids and back.snp_ids == d.snp_ids


def test_group_probs_validation():
    with pytest.raises(ValueError):
        GroupProbs(0.5, 0.5, 0.1, 0.0)
    gp = GroupProbs.independent(0.1, 0.2)
    assert gp.trait1 == pytest.approx(0.1)
    assert gp.trait2 == pytest.approx(0.2)


def test_model_params_family_exclusive():
    with pytest.raises(ValueError):
        ModelParams(sigma_beta_sq=(1.0, 1.0), group_probs=GroupProbs(0.25, 0.25, 0.25, 0.25),
                    sigma_e_sq=(1.0, 1.0), phi=(np.zeros(1), np.zeros(1)))
    mp = ModelParams(sigma_beta_sq=(1.0, 2.0), group_probs=GroupProbs(0.7, 0.1, 0.1, 0.1), sigma_e_sq=(1.0, 3.0))
    assert ModelParams.from_dict(mp.to_dict()).to_dict() == mp.to_dict()
    assert mp.family == QUANT


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(max_iter=0)
    with pytest.raises(ValueError):
        FitConfig(rel_tol=0.0)
