import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_dataset, six_row
from ipc_uplift.data_model import (DataError, UpliftDataset, converted_subset,
                                   load_csv, make_folds, make_holdout, validate,
                                   write_csv)


def test_load_six_row(six_row_csv):
    d = load_csv(six_row_csv)
    assert len(d) == 6
    assert d.feature_count == 1
    assert d.equals(six_row())


def test_load_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("feature_0,feature_1,treatment,conversion,profit,propensity\n")
    d = load_csv(path)
    assert len(d) == 0
    assert d.feature_count == 2


def test_malformed_cell_names_row_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("feature_0,treatment,conversion,profit,propensity\n"
                    "1,0,0,0,0.5\n1,0,0,0,0.5\n1,1,1,abc,0.5\n")
    with pytest.raises(DataError, match=r"row 3, column profit"):
        load_csv(path)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_csv(tmp_path / "nope.csv")


def test_missing_propensity_needs_default(tmp_path):
    path = tmp_path / "noprop.csv"
    path.write_text("feature_0,treatment,conversion,profit\n1,1,1,3\n")
    with pytest.raises(DataError, match="propensity"):
        load_csv(path)
    d = load_csv(path, default_propensity=0.25)
    assert d.propensity.tolist() == [0.25]


def test_inconsistent_column_count(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("feature_0,treatment,conversion,profit,propensity\n1,1,1,3\n")
    with pytest.raises(DataError, match="row 1"):
        load_csv(path)


def test_validate_six_row_clean(six_row_data):
    assert validate(six_row_data) == []


def test_validate_profit_without_conversion():
    d = UpliftDataset.from_arrays([[0.0]], [1], [0], [5.0], 0.5)
    problems = validate(d)
    assert problems == ["row 0: non-converted row must have zero profit"]


def test_validate_propensity_open_interval():
    d = UpliftDataset.from_arrays([[0.0], [1.0]], [1, 0], [1, 0], [5.0, 0.0],
                                  [1.0, 0.5])
    assert validate(d) == ["row 0: propensity must lie strictly between 0 and 1"]


def test_validate_binary_flags():
    d = UpliftDataset.from_arrays([[0.0]], [2], [1], [1.0], 0.5)
    assert validate(d) == ["row 0: treatment must be 0 or 1"]


def test_converted_subset_six_row(six_row_data):
    sub = converted_subset(six_row_data)
    assert len(sub) == 3
    # units 3, 5 and 6 in the example's 1-based numbering
    assert sub.profit.tolist() == [10.0, 8.0, 8.0]
    assert sub.treatment.tolist() == [0, 1, 1]


def test_converted_subset_edge_cases():
    all_conv = UpliftDataset.from_arrays([[0.0], [1.0]], [0, 1], [1, 1], [1.0, 2.0])
    assert converted_subset(all_conv).equals(all_conv)
    none = UpliftDataset.from_arrays([[0.0], [1.0]], [0, 1], [0, 0], [0.0, 0.0])
    assert len(converted_subset(none)) == 0


def test_dataset_is_immutable(six_row_data):
    with pytest.raises(ValueError):
        six_row_data.profit[0] = 1.0


@given(st.integers(0, 60), st.integers(0, 2**32 - 1))
def test_converted_subset_idempotent(n, seed):
    d = random_dataset(n, seed=seed)
    once = converted_subset(d)
    assert converted_subset(once).equals(once)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 40), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_csv_round_trip(tmp_path_factory, n, p, seed):
    d = random_dataset(n, p=p, seed=seed, propensity=0.3)
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(d, path)
    assert load_csv(path).equals(d)


def test_make_folds_full_size_balance():
    rng = np.random.default_rng(3)
    n = 200_000
    t = rng.integers(0, 2, n)
    c = (rng.random(n) < 0.03).astype(int)
    d = UpliftDataset.from_arrays(np.zeros((n, 1)), t, c, c * 1.0, 0.5)
    folds = make_folds(d, 5, seed=0)
    sizes = np.bincount(folds.fold_index, minlength=5)
    assert np.all(np.abs(sizes - 40_000) <= 4)  # one row per stratum at most
    strata = 2 * t + c
    for s in range(4):
        per = np.bincount(folds.fold_index[strata == s], minlength=5)
        assert per.max() - per.min() <= 1


def test_make_folds_deterministic():
    d = random_dataset(500, seed=1)
    a, b = make_folds(d, 5, 7), make_folds(d, 5, 7)
    assert np.array_equal(a.fold_index, b.fold_index)
    assert not np.array_equal(a.fold_index, make_folds(d, 5, 8).fold_index)


def test_make_folds_stratum_too_small():
    # k rows, one per stratum: every stratum has fewer than k rows
    d = UpliftDataset.from_arrays(np.zeros((4, 1)), [0, 0, 1, 1], [0, 1, 0, 1],
                                  [0.0, 1.0, 0.0, 1.0])
    with pytest.raises(ValueError, match="stratum"):
        make_folds(d, 4, 0)


def test_make_folds_k_too_small():
    with pytest.raises(ValueError):
        make_folds(random_dataset(50), 1, 0)


def test_holdout_fraction():
    d = random_dataset(1000, seed=2)
    tr, te = make_holdout(d, 0.3, 0)
    assert abs(te.size - 300) <= 2
    assert np.intersect1d(tr, te).size == 0
    assert tr.size + te.size == 1000


def test_take_accepts_slices_masks_and_indices():
    d = random_dataset(10, seed=3)
    by_slice = d.take(slice(2, 5))
    assert by_slice.equals(d.take([2, 3, 4]))
    assert by_slice.equals(d.take(np.isin(np.arange(10), [2, 3, 4])))
