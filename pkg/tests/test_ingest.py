import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crossim.core import ExhaustedError, rng_stream
from crossim.ingest import (
    CATEGORICAL,
    NUMERIC,
    ColumnSchema,
    DataError,
    PermutationSampler,
    RawTable,
    encode_categoricals,
    load_csv,
    load_schema,
    next_sample,
    read_matrix_bin,
    split_groups,
    standardize,
    write_matrix_bin,
    write_matrix_csv,
)


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small_numeric_file(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n3,4\n5,6\n")
    t = load_csv(p, [ColumnSchema("a"), ColumnSchema("b")])
    assert len(t) == 3 and t.columns == ["a", "b"]
    m, _ = encode_categoricals(t, [ColumnSchema("a"), ColumnSchema("b")])
    assert m.shape == (3, 2) and m[2].tolist() == [5.0, 6.0]


def test_wrong_arity_names_the_line(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n3\n")
    with pytest.raises(DataError, match=r":3:"):
        load_csv(p)


def test_non_numeric_value_names_the_line(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\nx,4\n")
    with pytest.raises(DataError, match=r":3: column 'a'"):
        load_csv(p, [ColumnSchema("a"), ColumnSchema("b")])


def test_empty_file_is_an_empty_table(tmp_path):
    t = load_csv(_write(tmp_path, ""))
    assert len(t) == 0


def test_missing_values_are_dropped(tmp_path):
    t = load_csv(_write(tmp_path, "a,b\n1, ?\n2,3\nNA,4\n5,6\n"))
    assert len(t) == 2 and t.dropped == 2


def test_missing_schema_column(tmp_path):
    with pytest.raises(DataError):
        load_csv(_write(tmp_path, "a\n1\n"), [ColumnSchema("z")])


def test_categorical_codes_by_first_appearance():
    t = RawTable(["c"], [["a"], ["b"], ["a"], ["c"]])
    m, fitted = encode_categoricals(t, [ColumnSchema("c", CATEGORICAL)])
    assert m[:, 0].tolist() == [1.0, 2.0, 1.0, 3.0]
    assert fitted[0].categories == {"a": 1, "b": 2, "c": 3}
    same = RawTable(["c"], [["z"]] * 4)
    assert encode_categoricals(same, [ColumnSchema("c", CATEGORICAL)])[0][:, 0].tolist() == [1.0] * 4


def test_unseen_category_without_fit():
    schema = [ColumnSchema("c", CATEGORICAL, {"a": 1})]
    with pytest.raises(DataError):
        encode_categoricals(RawTable(["c"], [["b"]]), schema, fit=False)


def test_numeric_column_unchanged_bit_for_bit():
    vals = ["0.1", "1e-300", "-2.5", "123456789.123456789"]
    m, _ = encode_categoricals(RawTable(["x"], [[v] for v in vals]), [ColumnSchema("x", NUMERIC)])
    assert m[:, 0].tolist() == [float(v) for v in vals]


def test_standardize_by_hand():
    Z, mean, std = standardize(np.array([[0.0, 5.0], [2.0, 5.0]]))
    assert Z[:, 0].tolist() == [-1.0, 1.0] and mean[0] == 1.0 and std[0] == 1.0
    assert Z[:, 1].tolist() == [0.0, 0.0]


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 4)), elements=st.floats(-1e3, 1e3)))
def test_standardize_moments(X):
    Z, _, std = standardize(X)
    live = std > 1e-6 * (np.abs(X).max(axis=0) + 1)
    assert np.allclose(Z[:, live].mean(axis=0), 0.0, atol=1e-9)
    assert np.allclose(Z[:, live].std(axis=0), 1.0, atol=1e-9)
    assert np.all(Z[:, std == 0] == 0.0)


def test_split_groups():
    t = RawTable(["marital"], [["married"], ["single"], ["divorced"], ["married"]])
    g1, g2 = split_groups(t, "marital", ["married"])
    assert g1.tolist() == [0, 3] and g2.tolist() == [1, 2]
    assert sorted(g1.tolist() + g2.tolist()) == [0, 1, 2, 3]
    g1, _ = split_groups(t, "marital", lambda v: v.startswith("s"))
    assert g1.tolist() == [1]
    with pytest.raises(DataError):
        split_groups(RawTable(["m"], [["married"]] * 3), "m", ["married"])


def test_permutation_sampler():
    X = np.arange(3.0)[:, None]
    s = PermutationSampler(X, 0, rng_stream(1))
    drawn = [next_sample(s).features[0] for _ in range(3)]
    assert sorted(drawn) == [0.0, 1.0, 2.0]
    with pytest.raises(ExhaustedError):
        next_sample(s)
    again = PermutationSampler(X, 0, rng_stream(1))
    assert again.take(3)[:, 0].tolist() == drawn


def test_schema_file(tmp_path):
    p = tmp_path / "schema.json"
    p.write_text(json.dumps({"columns": [{"name": "a"}, {"name": "b", "kind": "categorical"}]}))
    s = load_schema(p)
    assert [c.kind for c in s] == [NUMERIC, CATEGORICAL]
    with pytest.raises(DataError):
        ColumnSchema("x", "ordinal")


@given(arrays(np.float64, st.tuples(st.integers(0, 20), st.integers(1, 5)),
              elements=st.floats(allow_nan=False, allow_infinity=True, width=64)))
def test_binary_roundtrip(tmp_path_factory, X):
    p = tmp_path_factory.mktemp("bin") / "m.bin"
    write_matrix_bin(p, X)
    Y = read_matrix_bin(p)
    assert Y.shape == X.shape and Y.tobytes() == np.ascontiguousarray(X).tobytes()


def test_binary_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"not a matrix file at all, sorry")
    with pytest.raises(DataError):
        read_matrix_bin(p)


def test_matrix_csv_roundtrip(tmp_path):
    X = np.array([[0.1, 1 / 3], [1e-300, -2.0]])
    p = tmp_path / "m.csv"
    write_matrix_csv(p, X, header=["u", "v"])
    t = load_csv(p, [ColumnSchema("u"), ColumnSchema("v")])
    m, _ = encode_categoricals(t, [ColumnSchema("u"), ColumnSchema("v")])
    assert np.array_equal(m, X)
