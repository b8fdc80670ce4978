import json

import numpy as np
import pytest

from drwhatif import DataError, Dataset, feature_stats, load_csv
from drwhatif.dataset import dataset_to_csv


def test_oecd_style_csv_shape(oecd_csv):
    ds = load_csv(oecd_csv.encode(), id_column="name")
    assert ds.n == 34
    assert ds.d == 8
    assert ds.row_ids[0] == "country01"
    assert ds.feature_names[-1] == "StudentSkills"


def test_blank_cell_names_the_cell():
    text = "id,a,b\nr1,1.0,2.0\nr2,,3.0\n"
    with pytest.raises(DataError) as err:
        load_csv(text)
    assert err.value.code == "non_numeric_cell"
    assert "r2" in err.value.detail and "a" in err.value.detail


def test_hand_written_three_by_three():
    # independent expectation: parsed by hand from the literal text
    text = "id,x,y\na,1.5,-2.0\nb,0.25,4.0\nc,-1.0,0.5\n"
    ds = load_csv(text)
    assert ds.n == 3 and ds.d == 2
    assert ds.row_ids == ["a", "b", "c"]  # file order preserved
    assert ds.values.tolist() == [[1.5, -2.0], [0.25, 4.0], [-1.0, 0.5]]


def test_duplicate_id_rejected():
    text = "id,x,y\na,1,2\na,3,4\n"
    with pytest.raises(DataError) as err:
        load_csv(text)
    assert err.value.code == "duplicate_row_id"
    assert "a" in err.value.detail


def test_non_numeric_cell_names_row_and_column():
    text = "id,x,y\na,1,2\nb,oops,4\n"
    with pytest.raises(DataError) as err:
        load_csv(text)
    assert "b" in err.value.detail and "x" in err.value.detail


@pytest.mark.parametrize("text", ["id,x,y\na,1,2\n", "id,x\na,1\nb,2\n"])
def test_too_small_rejected(text):
    with pytest.raises(DataError) as err:
        load_csv(text)
    assert err.value.code == "too_small"


def test_non_finite_rejected():
    with pytest.raises(DataError):
        load_csv("id,x,y\na,1,inf\nb,2,3\n")
    with pytest.raises(DataError):
        Dataset(["a", "b"], ["x", "y"], [[1.0, np.nan], [2.0, 3.0]])


def test_id_column_by_index_and_name():
    text = "x,id,y\n1,a,2\n3,b,4\n"
    by_name = load_csv(text, id_column="id")
    by_index = load_csv(text, id_column=1)
    assert by_name.row_ids == by_index.row_ids == ["a", "b"]
    assert by_name.feature_names == ["x", "y"]


def test_rfc4180_quoting():
    text = 'id,"a,b",c\n"row,1",1.5,2\nrow2,3,4\n'
    ds = load_csv(text)
    assert ds.row_ids[0] == "row,1"
    assert ds.feature_names[0] == "a,b"


# --- feature statistics -----------------------------------------------------


def _stats_of(column):
    values = np.column_stack([column, np.zeros(len(column))])
    ds = Dataset([f"r{i}" for i in range(len(column))], ["v", "pad"], values)
    return feature_stats(ds, 0)


def test_constant_feature_stats():
    st = _stats_of([5.0, 5.0, 5.0])
    assert (st.mean, st.std, st.min, st.max) == (5.0, 0.0, 5.0, 5.0)


def test_two_point_symmetry():
    st = _stats_of([0.0, 10.0])
    assert (st.mean, st.std, st.min, st.max) == (5.0, 5.0, 0.0, 10.0)


def test_population_std_oracle():
    # direct-summation oracle: mean 2.5, population var = 5/4
    st = _stats_of([1.0, 2.0, 3.0, 4.0])
    assert st.mean == 2.5
    assert st.std == pytest.approx(np.sqrt(1.25), abs=1e-12)
    assert st.std == pytest.approx(1.1180, abs=1e-4)
    assert (st.min, st.max) == (1.0, 4.0)


def test_stats_index_out_of_range():
    ds = Dataset(["a", "b"], ["x", "y"], [[1, 2], [3, 4]])
    with pytest.raises(DataError):
        feature_stats(ds, 2)


def test_std_zero_iff_constant():
    rng = np.random.default_rng(0)
    values = rng.standard_normal((20, 3))
    values[:, 1] = 7.25
    ds = Dataset([f"r{i}" for i in range(20)], ["a", "b", "c"], values)
    assert feature_stats(ds, 1).std == 0.0
    assert feature_stats(ds, 0).std > 0.0
    assert feature_stats(ds, 2).std > 0.0


# --- invariants ---------------------------------------------------------------


def test_serialize_round_trip_bit_exact():
    rng = np.random.default_rng(3)
    values = rng.standard_normal((7, 4)) * np.pi
    ds = Dataset([f"r{i}" for i in range(7)], list("wxyz"), values)
    again = Dataset.from_json(json.loads(ds.to_json_str()))
    assert np.array_equal(again.values, ds.values)
    assert again.row_ids == ds.row_ids and again.feature_names == ds.feature_names

    via_csv = load_csv(dataset_to_csv(ds))
    assert np.array_equal(via_csv.values, ds.values)


def test_stats_permutation_invariant():
    rng = np.random.default_rng(9)
    values = rng.standard_normal((30, 3))
    ds = Dataset([f"r{i}" for i in range(30)], ["a", "b", "c"], values)
    perm = rng.permutation(30)
    shuffled = Dataset([ds.row_ids[i] for i in perm], ds.feature_names, values[perm])
    for j in range(3):
        a, b = feature_stats(ds, j), feature_stats(shuffled, j)
        assert a.mean == pytest.approx(b.mean, rel=1e-12)
        assert a.std == pytest.approx(b.std, rel=1e-12)
        assert (a.min, a.max) == (b.min, b.max)


def test_values_immutable():
    ds = Dataset(["a", "b"], ["x", "y"], [[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        ds.values[0, 0] = 99.0
